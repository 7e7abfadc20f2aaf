#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace csmmse {

// Locale-independent full-precision number formatting: %.17g keeps the
// round-trip digits and switches to scientific below 1e-4 on its own;
// magnitudes at 1e6 and above are forced scientific to match the CSV
// contract.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[48];
  if (std::abs(v) >= 1e6)
    std::snprintf(buf, sizeof(buf), "%.16e", v);
  else
    std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void header(const std::vector<std::string>& columns) {
    write_row_raw(columns);
  }

  class Row {
   public:
    explicit Row(CsvWriter& w) : writer_(w) {}
    Row& add(const std::string& s) {
      cells_.push_back(s);
      return *this;
    }
    Row& add(double v) { return add(format_number(v)); }
    Row& add(int v) { return add(std::to_string(v)); }
    Row& add(std::size_t v) { return add(std::to_string(v)); }
    Row& add(bool v) { return add(std::string(v ? "1" : "0")); }
    void done() { writer_.write_row_raw(cells_); }

   private:
    CsvWriter& writer_;
    std::vector<std::string> cells_;
  };

  Row row() { return Row(*this); }

 private:
  void write_row_raw(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  std::ostream& out_;
  friend class Row;
};

}  // namespace csmmse
