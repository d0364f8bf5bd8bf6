#include "fineas/embed_import.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "fineas/csv.hpp"
#include "fineas/data_model.hpp"
#include "fineas/io_utils.hpp"

namespace fineas::models {

uint64_t EmbeddingTable::headline_hash(const std::string& headline) {
  return fnv1a64(normalize_headline(headline));
}

void EmbeddingTable::insert(const std::string& headline,
                            std::vector<float> vec) {
  insert_hashed(headline_hash(headline), std::move(vec));
}

void EmbeddingTable::insert_hashed(uint64_t hash, std::vector<float> vec) {
  if (static_cast<int>(vec.size()) != dim_) {
    raise(Errc::ShapeMismatch,
          "embedding has " + std::to_string(vec.size()) + " values, table dim " +
              std::to_string(dim_));
  }
  if (by_hash_.emplace(hash, std::move(vec)).second) {
    insertion_order_.push_back(hash);
  }
}

const std::vector<float>* EmbeddingTable::lookup(
    const std::string& headline) const {
  const auto it = by_hash_.find(headline_hash(headline));
  return it == by_hash_.end() ? nullptr : &it->second;
}

void EmbeddingTable::save(const std::filesystem::path& csv_path,
                          const std::filesystem::path& manifest_path) const {
  std::ostringstream out;
  std::vector<std::string> header{"headline_hash"};
  for (int i = 1; i <= dim_; ++i) header.push_back("v" + std::to_string(i));
  csv::write_row(out, header);
  for (const uint64_t hash : insertion_order_) {
    std::vector<std::string> row{hex64(hash)};
    for (const float v : by_hash_.at(hash)) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof(buf), v);
      row.emplace_back(buf, res.ptr);
    }
    csv::write_row(out, row);
  }
  atomic_write_file(csv_path, out.str());

  std::ostringstream manifest;
  manifest << "hash_rule: " << hash_rule() << "\n"
           << "dim: " << dim_ << "\n"
           << "rows: " << rows() << "\n";
  atomic_write_file(manifest_path, manifest.str());
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& csv_path,
                                    const std::filesystem::path& manifest_path) {
  const std::string manifest = read_file(manifest_path);
  int dim = -1;
  {
    std::istringstream in(manifest);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("hash_rule: ", 0) == 0) {
        const std::string rule = line.substr(11);
        if (rule != hash_rule()) {
          raise(Errc::ParseError,
                manifest_path.string() + ": unsupported hash rule '" + rule + "'");
        }
      } else if (line.rfind("dim: ", 0) == 0) {
        dim = std::stoi(line.substr(5));
      }
    }
  }
  if (dim < 1) {
    raise(Errc::ParseError, manifest_path.string() + ": missing dim");
  }

  std::ifstream in(csv_path, std::ios::binary);
  if (!in) raise(Errc::FileNotFound, csv_path.string());
  csv::Reader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row) || row.empty() || row[0] != "headline_hash" ||
      static_cast<int>(row.size()) != dim + 1) {
    raise(Errc::ParseError, csv_path.string() + ": bad embedding header");
  }

  EmbeddingTable table(dim);
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (static_cast<int>(row.size()) != dim + 1) {
      raise(Errc::ParseError, csv_path.string() + ": row " +
                                  std::to_string(reader.line()) +
                                  " has wrong arity");
    }
    uint64_t hash = 0;
    const auto hres =
        std::from_chars(row[0].data(), row[0].data() + row[0].size(), hash, 16);
    if (hres.ec != std::errc() || hres.ptr != row[0].data() + row[0].size()) {
      raise(Errc::ParseError, csv_path.string() + ": bad hash at row " +
                                  std::to_string(reader.line()));
    }
    std::vector<float> vec(dim);
    for (int i = 0; i < dim; ++i) {
      const std::string& cell = row[i + 1];
      char* end = nullptr;
      vec[i] = std::strtof(cell.c_str(), &end);
      if (end != cell.c_str() + cell.size() || cell.empty()) {
        raise(Errc::ParseError, csv_path.string() + ": bad value at row " +
                                    std::to_string(reader.line()));
      }
    }
    table.insert_hashed(hash, std::move(vec));
  }
  return table;
}

}  // namespace fineas::models
