#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "ebbeam/errors.hpp"

namespace ebbeam::csv {

inline constexpr const char* precision_env = "EBBEAM_CSV_PRECISION";

/// Significant digits for floats: EBBEAM_CSV_PRECISION if set to 1..17, else 17.
inline int precision() {
  const char* s = std::getenv(precision_env);
  if (s == nullptr || *s == '\0') return 17;
  char* end = nullptr;
  const long v = std::strtol(s, &end, 10);
  if (end == s || *end != '\0' || v < 1 || v > 17) return 17;
  return static_cast<int>(v);
}

inline std::string format(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string format(double v) { return format(v, precision()); }

/// Line-oriented CSV writer; every file starts with its header row.
class Writer {
 public:
  Writer(const std::string& path, const std::vector<std::string>& header)
      : out_(path), digits_(precision()) {
    if (!out_) throw Error("cannot open " + path + " for writing");
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }

  Writer& cell(double v) {
    sep();
    out_ << format(v, digits_);
    return *this;
  }
  Writer& cell(long long v) {
    sep();
    out_ << v;
    return *this;
  }
  Writer& cell(int v) { return cell(static_cast<long long>(v)); }
  Writer& cell(const std::string& v) {
    sep();
    out_ << v;
    return *this;
  }
  Writer& empty() {
    sep();
    return *this;
  }
  void end_row() {
    out_ << '\n';
    first_ = true;
  }
  void flush() { out_.flush(); }

 private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }

  std::ofstream out_;
  int digits_;
  bool first_ = true;
};

}  // namespace ebbeam::csv
