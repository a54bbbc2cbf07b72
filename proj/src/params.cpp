#include "cogenav/params.hpp"

#include <cmath>
#include <cstring>
#include <cstdio>

#include "cogenav/errors.hpp"

namespace cogenav {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

}  // namespace

bool has_prefix(std::string_view name, std::string_view prefix) {
  return name.substr(0, prefix.size()) == prefix;
}

std::string checksum_hex(std::uint64_t sum) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(sum));
  return buf;
}

Param& ParamStore::add(std::string name, Shape shape) {
  require(!by_name_.contains(name), ErrorCode::kConfig, "duplicate parameter name: " + name);
  Param p;
  p.name = std::move(name);
  p.value.assign(numel(shape), 0.0);
  p.shape = std::move(shape);
  p.index = params_.size();
  by_name_.emplace(p.name, p.index);
  params_.push_back(std::move(p));
  return params_.back();
}

Param* ParamStore::find(std::string_view name) {
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? nullptr : &params_[it->second];
}

const Param* ParamStore::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? nullptr : &params_[it->second];
}

Param& ParamStore::at(std::string_view name) {
  Param* p = find(name);
  require(p != nullptr, ErrorCode::kFormat, "unknown parameter: " + std::string(name));
  return *p;
}

std::size_t ParamStore::count_values(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (has_prefix(p.name, prefix)) n += p.value.size();
  return n;
}

void ParamStore::set_trainable(std::string_view prefix, bool trainable) {
  for (auto& p : params_)
    if (has_prefix(p.name, prefix)) p.trainable = trainable;
}

void ParamStore::set_all_trainable(bool trainable) {
  for (auto& p : params_) p.trainable = trainable;
}

std::uint64_t ParamStore::checksum(std::string_view prefix) const {
  std::uint64_t h = kFnvOffset;
  for (const auto& p : params_) {
    if (!has_prefix(p.name, prefix)) continue;
    fnv_bytes(h, p.name.data(), p.name.size());
    for (int d : p.shape) {
      const std::int64_t d64 = d;
      fnv_bytes(h, &d64, sizeof(d64));
    }
    fnv_bytes(h, p.value.data(), p.value.size() * sizeof(double));
  }
  return h;
}

void ParamStore::copy_values_from(const ParamStore& other, std::string_view prefix) {
  for (auto& p : params_) {
    if (!has_prefix(p.name, prefix)) continue;
    const Param* src = other.find(p.name);
    if (!src) continue;
    require(src->shape == p.shape, ErrorCode::kShape, "copy_values_from: shape mismatch for " + p.name);
    p.value = src->value;
  }
}

void init_uniform(Param& p, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : p.value) v = dist(rng);
}

void init_fan_in(Param& p, int fan_in, std::mt19937_64& rng) {
  init_uniform(p, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

void init_constant(Param& p, double value) {
  for (double& v : p.value) v = value;
}

}  // namespace cogenav
