#include "deskasr/gradcore/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "deskasr/errors.hpp"

namespace deskasr::gradcore {

namespace {
constexpr const char* kMagic = "deskasr-ckpt-v1";

std::string hexf(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}
}  // namespace

void ParamMap::append(const ParamMap& other, const std::string& prefix) {
  for (const auto& [name, t] : other.items) items.emplace_back(prefix + name, t);
}

Tensor* ParamMap::find(const std::string& name) {
  for (auto& [n, t] : items) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::vector<Tensor> ParamMap::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items.size());
  for (const auto& [n, t] : items) out.push_back(t);
  return out;
}

std::size_t ParamMap::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items) n += t.size();
  return n;
}

void ParamMap::zero_grads() {
  for (auto& [n, t] : items) t.zero_grad();
}

void save_checkpoint(const std::string& path, const ParamMap& params) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  os << kMagic << "\n";
  os << "count " << params.items.size() << "\n";
  for (const auto& [name, t] : params.items) {
    os << name << " " << t.ndim();
    for (std::size_t i = 0; i < t.ndim(); ++i) os << " " << t.dim(i);
    os << "\n";
    auto v = t.value();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) os << " ";
      os << hexf(v[i]);
    }
    os << "\n";
  }
  if (!os) throw DataError("failed writing checkpoint: " + path);
}

ParamMap read_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  std::string magic;
  std::getline(is, magic);
  if (magic != kMagic) {
    throw DataError("bad checkpoint header in " + path + ": '" + magic + "'");
  }
  std::string word;
  std::size_t count = 0;
  is >> word >> count;
  if (word != "count") throw DataError("bad checkpoint count line in " + path);
  ParamMap out;
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    std::size_t ndim = 0;
    if (!(is >> name >> ndim)) throw DataError("truncated checkpoint: " + path);
    Shape shape(ndim);
    for (auto& d : shape) is >> d;
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) {
      if (!(is >> word)) throw DataError("truncated checkpoint payload: " + path);
      v = std::strtod(word.c_str(), nullptr);
    }
    out.add(name, Tensor::from(shape, std::move(data), true));
  }
  return out;
}

void load_checkpoint(const std::string& path, ParamMap& params) {
  ParamMap loaded = read_checkpoint(path);
  if (loaded.items.size() != params.items.size()) {
    throw DataError("checkpoint " + path + " holds " +
                    std::to_string(loaded.items.size()) + " parameters, expected " +
                    std::to_string(params.items.size()));
  }
  for (auto& [name, t] : params.items) {
    Tensor* src = loaded.find(name);
    if (!src) throw DataError("checkpoint " + path + " missing parameter " + name);
    if (src->shape() != t.shape()) {
      throw DimensionError("checkpoint parameter " + name + " has shape " +
                           shape_str(src->shape()) + ", expected " +
                           shape_str(t.shape()));
    }
    t.raw() = std::vector<double>(src->value().begin(), src->value().end());
  }
}

}  // namespace deskasr::gradcore
