#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "rfkit/network.hpp"

namespace rfkit {

// Line-oriented architecture description:
//
//   network <name> in_channels=<int>
//   conv k=<f>x<t> s=<f>x<t> [d=<f>x<t>] c=<out> [bn|nobn] [bias] [act=relu|linear]
//   pool max|avg k=<f>x<t> s=<f>x<t>
//   resblock [proj k=<f>x<t> s=<f>x<t>] {
//   denseblock growth=<int> {
//   }
//   gap
//   classifier classes=<int>
//
// '#' starts a comment. The header is optional; without it the name and input
// channel count come from ParseOptions.

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int column, std::string expected, std::string found);

  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& expected() const { return expected_; }
  const std::string& found() const { return found_; }

 private:
  int line_;
  int column_;
  std::string expected_;
  std::string found_;
};

struct ParseOptions {
  std::string default_name = "unnamed";
  int default_input_channels = 1;
};

/// Parses and validates. Throws ParseError on syntax errors and
/// ValidationError on semantic ones (unbalanced blocks, channel mismatch, ...).
NetworkSpec parse_network(std::string_view text, const ParseOptions& opts = {});

/// Canonical form: header line, one directive per line, two-space indent
/// inside blocks, defaults omitted, LF line endings.
std::string serialize_network(const NetworkSpec& net);

NetworkSpec load_network_file(const std::string& path, const ParseOptions& opts = {});

}  // namespace rfkit
