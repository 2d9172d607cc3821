#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "taanp/model.hpp"

namespace taanp {

// Container format: a text manifest (key-value lines, then one `tensor`
// line per entry) followed by a binary blob holding the tensors in
// manifest order. Model checkpoints use little-endian float32 payloads;
// training-resume files use float64 so a resumed run continues bit-exactly.
struct CheckpointFile {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::string dtype = "f32";

  const std::string* find_meta(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return &v;
    return nullptr;
  }

  const Tensor* find_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void append_le32(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

inline void append_le64(std::string& out, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

inline float read_le32(const char* p) {
  std::uint32_t u = 0;
  for (int i = 3; i >= 0; --i)
    u = (u << 8) | static_cast<unsigned char>(p[i]);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

inline double read_le64(const char* p) {
  std::uint64_t u = 0;
  for (int i = 7; i >= 0; --i)
    u = (u << 8) | static_cast<unsigned char>(p[i]);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

}  // namespace detail

inline std::string serialize_checkpoint(const CheckpointFile& ck) {
  std::string blob;
  for (const auto& [name, t] : ck.tensors) {
    (void)name;
    for (double v : t.data) {
      if (ck.dtype == "f32")
        detail::append_le32(blob, static_cast<float>(v));
      else
        detail::append_le64(blob, v);
    }
  }
  std::ostringstream out;
  out << "taanp-checkpoint v1\n";
  out << "dtype " << ck.dtype << "\n";
  for (const auto& [k, v] : ck.meta) out << k << " " << v << "\n";
  for (const auto& [name, t] : ck.tensors)
    out << "tensor " << name << " " << t.rows << " " << t.cols << "\n";
  out << "blob " << blob.size() << "\n";
  out << blob;
  return out.str();
}

inline void write_checkpoint(const std::string& path,
                             const CheckpointFile& ck) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  std::string bytes = serialize_checkpoint(ck);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

inline CheckpointFile parse_checkpoint(const std::string& bytes,
                                       const std::string& origin) {
  CheckpointFile ck;
  std::size_t pos = 0;
  auto next_line = [&]() {
    std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos)
      throw IoError("truncated checkpoint: " + origin);
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line() != "taanp-checkpoint v1")
    throw IoError("not a checkpoint file: " + origin);
  struct Pending {
    std::string name;
    std::size_t rows, cols;
  };
  std::vector<Pending> pending;
  std::size_t blob_size = 0;
  while (true) {
    std::string line = next_line();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "dtype") {
      ls >> ck.dtype;
      if (ck.dtype != "f32" && ck.dtype != "f64")
        throw IoError("unsupported checkpoint dtype: " + ck.dtype);
    } else if (key == "tensor") {
      Pending p;
      ls >> p.name >> p.rows >> p.cols;
      if (!ls || p.rows == 0 || p.cols == 0)
        throw IoError("bad tensor line in checkpoint: " + line);
      pending.push_back(p);
    } else if (key == "blob") {
      ls >> blob_size;
      break;
    } else {
      std::string rest;
      std::getline(ls, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
      ck.meta.emplace_back(key, rest);
    }
  }
  if (bytes.size() - pos != blob_size)
    throw IoError("checkpoint blob size mismatch in " + origin);
  std::size_t width = ck.dtype == "f32" ? 4 : 8;
  std::size_t need = 0;
  for (const auto& p : pending) need += p.rows * p.cols * width;
  if (need != blob_size)
    throw IoError("checkpoint blob does not match tensor table in " + origin);
  const char* cur = bytes.data() + pos;
  for (const auto& p : pending) {
    Tensor t(p.rows, p.cols);
    for (auto& v : t.data) {
      v = (ck.dtype == "f32") ? static_cast<double>(detail::read_le32(cur))
                              : detail::read_le64(cur);
      cur += width;
    }
    ck.tensors.emplace_back(p.name, std::move(t));
  }
  return ck;
}

inline CheckpointFile read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_checkpoint(ss.str(), path);
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += format_double(v[i]);
  }
  return s;
}

inline std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t comma = s.find(',', pos);
    std::string tok = s.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    bool ok = false;
    double v = parse_double(tok, ok);
    if (!ok) throw IoError("bad numeric list in checkpoint meta: " + s);
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline CheckpointFile model_to_checkpoint(const ModelParams& params,
                                          const std::string& dtype = "f32") {
  CheckpointFile ck;
  ck.dtype = dtype;
  const ModelConfig& c = params.cfg;
  ck.meta = {
      {"variant", variant_name(c.variant)},
      {"x_dim", std::to_string(c.x_dim)},
      {"rep_dim", std::to_string(c.rep_dim)},
      {"latent_dim", std::to_string(c.latent_dim)},
      {"n_heads", std::to_string(c.n_heads)},
      {"enc_width", std::to_string(c.enc_width)},
      {"dec_width", std::to_string(c.dec_width)},
      {"lat_width", std::to_string(c.lat_width)},
      {"dropout_rate", format_double(c.dropout_rate)},
      {"sigma_floor", format_double(c.sigma_floor)},
      {"y_mean", format_double(params.norm.y_mean)},
      {"y_scale", format_double(params.norm.y_scale)},
      {"x_offset", join_doubles(params.norm.x_offset)},
      {"x_scale", join_doubles(params.norm.x_scale)},
  };
  for (const Parameter* p : params.parameters())
    ck.tensors.emplace_back(p->name, p->value);
  return ck;
}

inline ModelParams model_from_checkpoint(const CheckpointFile& ck) {
  auto meta_or_throw = [&](const std::string& key) {
    const std::string* v = ck.find_meta(key);
    if (!v) throw IoError("checkpoint missing meta key: " + key);
    return *v;
  };
  auto meta_int = [&](const std::string& key) {
    bool ok = false;
    long long v = parse_int(meta_or_throw(key), ok);
    if (!ok) throw IoError("bad integer meta in checkpoint: " + key);
    return static_cast<int>(v);
  };
  auto meta_dbl = [&](const std::string& key) {
    bool ok = false;
    double v = parse_double(meta_or_throw(key), ok);
    if (!ok) throw IoError("bad numeric meta in checkpoint: " + key);
    return v;
  };
  ModelConfig cfg;
  cfg.variant = variant_from_name(meta_or_throw("variant"));
  cfg.x_dim = meta_int("x_dim");
  cfg.rep_dim = meta_int("rep_dim");
  cfg.latent_dim = meta_int("latent_dim");
  cfg.n_heads = meta_int("n_heads");
  cfg.enc_width = meta_int("enc_width");
  cfg.dec_width = meta_int("dec_width");
  cfg.lat_width = meta_int("lat_width");
  cfg.dropout_rate = meta_dbl("dropout_rate");
  cfg.sigma_floor = meta_dbl("sigma_floor");
  ModelParams params = ModelParams::init(cfg, 0);
  params.norm.y_mean = meta_dbl("y_mean");
  params.norm.y_scale = meta_dbl("y_scale");
  params.norm.x_offset = split_doubles(meta_or_throw("x_offset"));
  params.norm.x_scale = split_doubles(meta_or_throw("x_scale"));
  if (static_cast<int>(params.norm.x_offset.size()) != cfg.x_dim ||
      static_cast<int>(params.norm.x_scale.size()) != cfg.x_dim)
    throw IoError("checkpoint normalization size does not match x_dim");
  for (Parameter* p : params.parameters()) {
    const Tensor* t = ck.find_tensor(p->name);
    if (!t) throw IoError("checkpoint missing tensor: " + p->name);
    if (!t->same_shape(p->value))
      throw IoError("checkpoint tensor shape mismatch: " + p->name);
    p->value = *t;
  }
  return params;
}

inline void save_model(const std::string& path, const ModelParams& params) {
  write_checkpoint(path, model_to_checkpoint(params, "f32"));
}

inline ModelParams load_model(const std::string& path) {
  return model_from_checkpoint(read_checkpoint(path));
}

}  // namespace taanp
