#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace fineas::csv {

// RFC 4180 row reader. Handles quoted fields, doubled-quote escapes and
// embedded commas/newlines; accepts both \n and \r\n row terminators.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Reads one record into `fields`. Returns false at end of input.
  // line() reports the physical line the record started on (1-based),
  // which is what rejects reports cite.
  bool next(std::vector<std::string>& fields);

  size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  size_t current_line_ = 1;
  size_t record_line_ = 1;
};

// Writes one record. Fields containing comma, quote, CR or LF are quoted
// with doubled-quote escaping. Rows terminate with a single '\n' so that
// emitted artifacts are byte-stable across platforms.
void write_row(std::ostream& out, const std::vector<std::string>& fields);

std::string escape_field(const std::string& field);

}  // namespace fineas::csv
