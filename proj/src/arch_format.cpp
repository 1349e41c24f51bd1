#include "rfkit/arch_format.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "overloaded.hpp"

namespace rfkit {

ParseError::ParseError(int line, int column, std::string expected, std::string found)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": expected " +
                         expected + ", found " + (found.empty() ? "end of line" : "'" + found + "'")),
      line_(line),
      column_(column),
      expected_(std::move(expected)),
      found_(std::move(found)) {}

namespace {

struct Token {
  std::string text;
  int column = 0;
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    char ch = line[i];
    if (ch == '#') break;
    if (ch == ' ' || ch == '\t' || ch == '\r') {
      ++i;
      continue;
    }
    if (ch == '{' || ch == '}') {
      out.push_back({std::string(1, ch), static_cast<int>(i) + 1});
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r' &&
           line[i] != '{' && line[i] != '}' && line[i] != '#')
      ++i;
    out.push_back({std::string(line.substr(start, i - start)), static_cast<int>(start) + 1});
  }
  return out;
}

class LineParser {
 public:
  LineParser(int line_no, std::vector<Token> toks, std::size_t line_len)
      : line_(line_no), toks_(std::move(toks)), eol_col_(static_cast<int>(line_len) + 1) {}

  bool done() const { return pos_ >= toks_.size(); }
  const Token* peek() const { return done() ? nullptr : &toks_[pos_]; }
  int column() const { return done() ? eol_col_ : toks_[pos_].column; }

  [[noreturn]] void fail(const std::string& expected) const {
    throw ParseError(line_, column(), expected, done() ? "" : toks_[pos_].text);
  }

  const Token& next(const std::string& expected) {
    if (done()) fail(expected);
    return toks_[pos_++];
  }

  void expect_end() {
    if (!done()) fail("end of line");
  }

  int parse_int(std::string_view s, int col, const std::string& what) const {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
      throw ParseError(line_, col, what, std::string(s));
    return v;
  }

  Axis2 parse_axis(std::string_view s, int col) const {
    auto x = s.find('x');
    if (x == std::string_view::npos)
      throw ParseError(line_, col, "<freq>x<time>", std::string(s));
    return {parse_int(s.substr(0, x), col, "<freq>x<time>"),
            parse_int(s.substr(x + 1), col, "<freq>x<time>")};
  }

  // Splits "key=value"; returns false if the token is not of that form.
  static bool split_kv(const std::string& tok, std::string_view& key, std::string_view& val) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) return false;
    key = std::string_view(tok).substr(0, eq);
    val = std::string_view(tok).substr(eq + 1);
    return true;
  }

  int line() const { return line_; }

 private:
  int line_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int eol_col_;
};

Conv parse_conv(LineParser& p) {
  Conv c;
  bool have_k = false, have_s = false, have_c = false;
  while (!p.done()) {
    const Token& t = p.next("conv attribute");
    std::string_view key, val;
    if (LineParser::split_kv(t.text, key, val)) {
      if (key == "k") {
        c.kernel = p.parse_axis(val, t.column);
        have_k = true;
      } else if (key == "s") {
        c.stride = p.parse_axis(val, t.column);
        have_s = true;
      } else if (key == "d") {
        c.dilation = p.parse_axis(val, t.column);
      } else if (key == "c") {
        c.out_channels = p.parse_int(val, t.column, "channel count");
        have_c = true;
      } else if (key == "act") {
        if (val == "relu")
          c.activation = Activation::relu;
        else if (val == "linear")
          c.activation = Activation::linear;
        else
          throw ParseError(p.line(), t.column, "relu|linear", std::string(val));
      } else {
        throw ParseError(p.line(), t.column, "one of k=, s=, d=, c=, act=", t.text);
      }
    } else if (t.text == "bn") {
      c.has_batchnorm = true;
    } else if (t.text == "nobn") {
      c.has_batchnorm = false;
    } else if (t.text == "bias") {
      c.has_bias = true;
    } else {
      throw ParseError(p.line(), t.column, "conv attribute", t.text);
    }
  }
  if (!have_k) p.fail("k=<f>x<t>");
  if (!have_s) p.fail("s=<f>x<t>");
  if (!have_c) p.fail("c=<out>");
  return c;
}

Pool parse_pool(LineParser& p) {
  Pool pool;
  const Token& kind = p.next("max|avg");
  if (kind.text == "max")
    pool.kind = PoolKind::max;
  else if (kind.text == "avg")
    pool.kind = PoolKind::average;
  else
    throw ParseError(p.line(), kind.column, "max|avg", kind.text);
  bool have_k = false, have_s = false;
  while (!p.done()) {
    const Token& t = p.next("pool attribute");
    std::string_view key, val;
    if (!LineParser::split_kv(t.text, key, val))
      throw ParseError(p.line(), t.column, "k= or s=", t.text);
    if (key == "k") {
      pool.kernel = p.parse_axis(val, t.column);
      have_k = true;
    } else if (key == "s") {
      pool.stride = p.parse_axis(val, t.column);
      have_s = true;
    } else {
      throw ParseError(p.line(), t.column, "k= or s=", t.text);
    }
  }
  if (!have_k) p.fail("k=<f>x<t>");
  if (!have_s) p.fail("s=<f>x<t>");
  return pool;
}

int parse_named_int(LineParser& p, std::string_view name) {
  const Token& t = p.next(std::string(name) + "=<int>");
  std::string_view key, val;
  if (!LineParser::split_kv(t.text, key, val) || key != name)
    throw ParseError(p.line(), t.column, std::string(name) + "=<int>", t.text);
  return p.parse_int(val, t.column, std::string(name) + "=<int>");
}

void expect_open_brace(LineParser& p) {
  const Token& t = p.next("'{'");
  if (t.text != "{") throw ParseError(p.line(), t.column, "'{'", t.text);
  p.expect_end();
}

}  // namespace

NetworkSpec parse_network(std::string_view text, const ParseOptions& opts) {
  NetworkSpec net;
  net.name = opts.default_name;
  net.input_channels = opts.default_input_channels;

  enum class Open { residual, dense };
  std::vector<Open> open;
  bool any_directive = false;
  int line_no = 0;

  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? text.size() - start
                                                                             : nl - start);
    start = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;

    LineParser p(line_no, tokenize(line), line.size());
    if (p.done()) continue;
    const Token head = p.next("directive");
    SourceLoc loc{line_no, head.column};

    if (head.text == "network") {
      if (any_directive)
        throw ParseError(line_no, head.column, "network header only as the first directive",
                         head.text);
      net.name = p.next("network name").text;
      net.input_channels = parse_named_int(p, "in_channels");
      p.expect_end();
    } else if (head.text == "conv") {
      net.layers.emplace_back(parse_conv(p), loc);
    } else if (head.text == "pool") {
      net.layers.emplace_back(parse_pool(p), loc);
    } else if (head.text == "resblock") {
      ResidualBegin r;
      if (const Token* t = p.peek(); t && t->text == "proj") {
        p.next("proj");
        Projection proj;
        bool have_k = false, have_s = false;
        while (const Token* a = p.peek()) {
          if (a->text == "{") break;
          const Token& tok = p.next("k= or s=");
          std::string_view key, val;
          if (!LineParser::split_kv(tok.text, key, val) || (key != "k" && key != "s"))
            throw ParseError(line_no, tok.column, "k= or s=", tok.text);
          if (key == "k") {
            proj.kernel = p.parse_axis(val, tok.column);
            have_k = true;
          } else {
            proj.stride = p.parse_axis(val, tok.column);
            have_s = true;
          }
        }
        if (!have_k) p.fail("k=<f>x<t>");
        if (!have_s) p.fail("s=<f>x<t>");
        r.projection = proj;
      }
      expect_open_brace(p);
      net.layers.emplace_back(r, loc);
      open.push_back(Open::residual);
    } else if (head.text == "denseblock") {
      DenseBegin d{parse_named_int(p, "growth")};
      expect_open_brace(p);
      net.layers.emplace_back(d, loc);
      open.push_back(Open::dense);
    } else if (head.text == "}") {
      p.expect_end();
      if (open.empty()) {
        throw ValidationError({{net.layers.size(), DiagKind::unbalanced_block,
                                "unbalanced block: '}' at line " + std::to_string(line_no) +
                                    " closes nothing"}});
      }
      if (open.back() == Open::residual)
        net.layers.emplace_back(ResidualEnd{}, loc);
      else
        net.layers.emplace_back(DenseEnd{}, loc);
      open.pop_back();
    } else if (head.text == "gap") {
      p.expect_end();
      net.layers.emplace_back(GlobalAvgPool{}, loc);
    } else if (head.text == "classifier") {
      Classifier c{parse_named_int(p, "classes")};
      p.expect_end();
      net.layers.emplace_back(c, loc);
    } else {
      throw ParseError(line_no, head.column,
                       "one of network, conv, pool, resblock, denseblock, }, gap, classifier",
                       head.text);
    }
    any_directive = true;
  }

  infer_in_channels(net);
  require_valid(net);
  return net;
}

namespace {

void append_axis(std::string& s, const char* key, Axis2 a) {
  s += ' ';
  s += key;
  s += '=';
  s += a.str();
}

}  // namespace

std::string serialize_network(const NetworkSpec& net) {
  using detail::overloaded;
  std::string out = "network " + net.name + " in_channels=" + std::to_string(net.input_channels) +
                    "\n";
  int depth = 0;
  for (const Layer& layer : net.layers) {
    std::string line;
    std::visit(overloaded{
                   [&](const Conv& c) {
                     line = "conv";
                     append_axis(line, "k", c.kernel);
                     append_axis(line, "s", c.stride);
                     if (c.dilation != Axis2{1, 1}) append_axis(line, "d", c.dilation);
                     line += " c=" + std::to_string(c.out_channels);
                     if (!c.has_batchnorm) line += " nobn";
                     if (c.has_bias) line += " bias";
                     if (c.activation == Activation::linear) line += " act=linear";
                   },
                   [&](const Pool& p) {
                     line = p.kind == PoolKind::max ? "pool max" : "pool avg";
                     append_axis(line, "k", p.kernel);
                     append_axis(line, "s", p.stride);
                   },
                   [&](const ResidualBegin& r) {
                     line = "resblock";
                     if (r.projection) {
                       line += " proj";
                       append_axis(line, "k", r.projection->kernel);
                       append_axis(line, "s", r.projection->stride);
                     }
                     line += " {";
                   },
                   [&](const ResidualEnd&) {
                     --depth;
                     line = "}";
                   },
                   [&](const DenseBegin& d) {
                     line = "denseblock growth=" + std::to_string(d.growth_rate) + " {";
                   },
                   [&](const DenseEnd&) {
                     --depth;
                     line = "}";
                   },
                   [&](const GlobalAvgPool&) { line = "gap"; },
                   [&](const Classifier& c) { line = "classifier classes=" + std::to_string(c.classes); },
               },
               layer.kind);
    out.append(static_cast<std::size_t>(std::max(depth, 0)) * 2, ' ');
    out += line;
    out += '\n';
    if (layer.is<ResidualBegin>() || layer.is<DenseBegin>()) ++depth;
  }
  return out;
}

NetworkSpec load_network_file(const std::string& path, const ParseOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open architecture file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_network(ss.str(), opts);
}

}  // namespace rfkit
