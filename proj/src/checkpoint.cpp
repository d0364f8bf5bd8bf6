#include "fineas/checkpoint.hpp"

#include <cstring>
#include <sstream>

#include "fineas/io_utils.hpp"

namespace fineas::ckpt {

namespace {

constexpr char kMagic[4] = {'F', 'N', 'C', 'K'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

class Cursor {
 public:
  Cursor(const std::string& data, const std::string& context)
      : data_(data), context_(context) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  float f32() {
    const uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }

  std::string bytes(size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(size_t n) {
    if (pos_ + n > data_.size()) {
      raise(Errc::ParseError, context_ + ": truncated checkpoint");
    }
  }

  const std::string& data_;
  std::string context_;
  size_t pos_ = 0;
};

}  // namespace

void save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kFormatVersion);

  std::ostringstream header;
  for (const auto& [key, value] : ckpt.header) {
    header << key << '=' << value << '\n';
  }
  const std::string header_str = header.str();
  put_u32(out, static_cast<uint32_t>(header_str.size()));
  out += header_str;

  put_u32(out, static_cast<uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    put_u32(out, static_cast<uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<uint32_t>(p.shape.size()));
    for (int d : p.shape) put_u32(out, static_cast<uint32_t>(d));
    put_u64(out, p.values.size());
    for (float v : p.values) put_f32(out, v);
  }
  atomic_write_file(path, out);
}

Checkpoint load(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  Cursor cur(data, path.string());
  if (cur.bytes(4) != std::string(kMagic, 4)) {
    raise(Errc::ParseError, path.string() + ": not a checkpoint file");
  }
  const uint32_t version = cur.u32();
  if (version != kFormatVersion) {
    raise(Errc::ParseError, path.string() + ": unsupported format version " +
                                std::to_string(version));
  }
  Checkpoint ckpt;
  const uint32_t header_len = cur.u32();
  std::istringstream header(cur.bytes(header_len));
  std::string line;
  while (std::getline(header, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) {
      ckpt.header[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  const uint32_t count = cur.u32();
  ckpt.params.resize(count);
  for (auto& p : ckpt.params) {
    p.name = cur.bytes(cur.u32());
    const uint32_t rank = cur.u32();
    p.shape.resize(rank);
    int64_t expect = 1;
    for (auto& d : p.shape) {
      d = static_cast<int>(cur.u32());
      expect *= d;
    }
    const uint64_t n = cur.u64();
    if (static_cast<int64_t>(n) != expect) {
      raise(Errc::ParseError, path.string() + ": entry '" + p.name +
                                  "' count does not match shape");
    }
    p.values.resize(n);
    for (auto& v : p.values) v = cur.f32();
  }
  if (!cur.done()) {
    raise(Errc::ParseError, path.string() + ": trailing bytes");
  }
  return ckpt;
}

std::vector<ParamEntry> snapshot_params(
    const std::vector<num::Tensor<float>>& params) {
  std::vector<ParamEntry> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back({p.name(), p.shape(), p.values()});
  }
  return out;
}

void restore_params(std::vector<num::Tensor<float>>& params,
                    const std::vector<ParamEntry>& entries) {
  std::map<std::string, const ParamEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (auto& p : params) {
    const auto it = by_name.find(p.name());
    if (it == by_name.end()) {
      raise(Errc::ParseError, "checkpoint missing parameter '" + p.name() + "'");
    }
    const ParamEntry& e = *it->second;
    if (e.shape != p.shape()) {
      raise(Errc::ShapeMismatch, "checkpoint parameter '" + p.name() +
                                     "' has shape " + num::shape_str(e.shape) +
                                     ", model expects " +
                                     num::shape_str(p.shape()));
    }
    p.mutable_values() = e.values;
  }
}

Checkpoint from_model(const models::FineasEncoderModel<float>& model) {
  Checkpoint ckpt;
  const auto& spec = model.spec();
  ckpt.header["model_kind"] = "fineas";
  ckpt.header["vocab_size"] = std::to_string(spec.vocab_size);
  ckpt.header["d_model"] = std::to_string(spec.d_model);
  ckpt.header["n_layers"] = std::to_string(spec.n_layers);
  ckpt.header["n_heads"] = std::to_string(spec.n_heads);
  ckpt.header["d_ff"] = std::to_string(spec.ff_dim());
  ckpt.header["max_len"] = std::to_string(spec.max_len);
  ckpt.header["pooling"] = models::pooling_name(spec.pooling);
  ckpt.header["frozen"] = model.frozen() ? "1" : "0";
  ckpt.params = snapshot_params(model.parameters());
  return ckpt;
}

Checkpoint from_model(const models::BiLstmModel<float>& model) {
  Checkpoint ckpt;
  const auto& spec = model.spec();
  ckpt.header["model_kind"] = "bilstm";
  ckpt.header["vocab_size"] = std::to_string(spec.vocab_size);
  ckpt.header["embedding_dim"] = std::to_string(spec.embedding_dim);
  ckpt.header["hidden"] = std::to_string(spec.hidden);
  ckpt.header["layers"] = std::to_string(spec.layers);
  ckpt.header["max_len"] = std::to_string(spec.max_len);
  ckpt.params = snapshot_params(model.parameters());
  return ckpt;
}

void load_into_model(models::FineasEncoderModel<float>& model,
                     const Checkpoint& ckpt) {
  auto params = model.parameters();
  restore_params(params, ckpt.params);
}

void load_into_model(models::BiLstmModel<float>& model, const Checkpoint& ckpt) {
  auto params = model.parameters();
  restore_params(params, ckpt.params);
}

}  // namespace fineas::ckpt
