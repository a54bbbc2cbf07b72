#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cogenav/tensor.hpp"

namespace cogenav {

// Owns named parameters. Names are dot-separated module paths
// ("backbone.audio.conv1.weight"); addresses are stable for the store's
// lifetime, so modules keep `Param*` handles.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Param& add(std::string name, Shape shape);
  Param* find(std::string_view name);
  const Param* find(std::string_view name) const;
  Param& at(std::string_view name);

  std::size_t size() const { return params_.size(); }
  std::deque<Param>& all() { return params_; }
  const std::deque<Param>& all() const { return params_; }

  std::size_t count_values(std::string_view prefix = {}) const;

  // Marks every parameter whose name starts with `prefix` (trainable flag).
  void set_trainable(std::string_view prefix, bool trainable);
  void set_all_trainable(bool trainable);

  // FNV-1a over names, shapes and IEEE-754 bytes of every parameter under
  // `prefix`, in registration order.
  std::uint64_t checksum(std::string_view prefix = {}) const;

  // Copies values of every parameter present in both stores by name.
  void copy_values_from(const ParamStore& other, std::string_view prefix = {});

 private:
  std::deque<Param> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

bool has_prefix(std::string_view name, std::string_view prefix);
std::string checksum_hex(std::uint64_t sum);

// Initializers.
void init_uniform(Param& p, double bound, std::mt19937_64& rng);
// Uniform(+-1/sqrt(fan_in)), the usual default for linear/conv layers.
void init_fan_in(Param& p, int fan_in, std::mt19937_64& rng);
void init_constant(Param& p, double value);

}  // namespace cogenav
