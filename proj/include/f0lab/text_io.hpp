#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "f0lab/error.hpp"

// Token-stream helpers for the versioned text formats. All floats are
// written with 9 significant digits; parsing a written file and writing it
// again reproduces the bytes exactly.
namespace f0lab::textio {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

class Reader {
 public:
  Reader(std::istream& in, std::string source)
      : in_(in), source_(std::move(source)) {}

  // Context string woven into parse errors, e.g. the current utterance id.
  void set_context(std::string ctx) { context_ = std::move(ctx); }

  std::string next_token() {
    std::string tok;
    if (!(in_ >> tok)) fail("unexpected end of file");
    return tok;
  }

  void expect(const std::string& literal) {
    std::string tok = next_token();
    if (tok != literal)
      fail("expected '", literal, "', got '", tok, "'");
  }

  std::string next_word(const char* what) {
    std::string tok;
    if (!(in_ >> tok)) fail("unexpected end of file while reading ", what);
    return tok;
  }

  long long next_int(const char* what) {
    std::string tok = next_word(what);
    try {
      std::size_t pos = 0;
      long long v = std::stoll(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      fail("bad integer '", tok, "' for ", what);
    }
  }

  double next_double(const char* what) {
    std::string tok = next_word(what);
    try {
      std::size_t pos = 0;
      double v = std::stod(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      fail("bad number '", tok, "' for ", what);
    }
  }

  // Reads and checks a "NAME vN" header line.
  void expect_header(const std::string& magic, const std::string& version) {
    expect(magic);
    expect(version);
  }

  template <typename... Parts>
  [[noreturn]] void fail(const Parts&... parts) {
    fail_at(ErrorCode::parse, parts...);
  }

  template <typename... Parts>
  [[noreturn]] void fail_at(ErrorCode code, const Parts&... parts) {
    std::ostringstream os;
    os << source_;
    if (!context_.empty()) os << " [" << context_ << "]";
    os << ": ";
    detail::format_into(os, parts...);
    throw Error(code, os.str());
  }

 private:
  std::istream& in_;
  std::string source_;
  std::string context_;
};

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot open file for reading: ", path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot open file for writing: ", path);
  return out;
}

// Identifiers and categorical values must be single whitespace-free tokens
// so the formats stay unambiguous.
inline bool valid_token(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '.' || c == ':' ||
              c == '+' || c == '-';
    if (!ok) return false;
  }
  return true;
}

}  // namespace f0lab::textio
