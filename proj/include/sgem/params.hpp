#pragma once

#include "sgem/core.hpp"

#include <string>
#include <vector>

namespace sgem {

struct ParameterArray {
  std::string name;
  Matrix value;
};

struct ParameterGroup {
  std::string name;
  std::vector<ParameterArray> arrays;
};

/// Named groups of named arrays. Used for parameters, gradients, optimizer
/// moments and snapshots alike.
class ParameterSet {
 public:
  ParameterSet() = default;

  Matrix& add(const std::string& group, const std::string& array, Matrix value);

  [[nodiscard]] Matrix& at(const std::string& group, const std::string& array);
  [[nodiscard]] const Matrix& at(const std::string& group, const std::string& array) const;
  [[nodiscard]] ParameterGroup* find_group(const std::string& group);
  [[nodiscard]] const ParameterGroup* find_group(const std::string& group) const;
  [[nodiscard]] bool has_group(const std::string& group) const { return find_group(group) != nullptr; }

  [[nodiscard]] std::vector<ParameterGroup>& groups() { return groups_; }
  [[nodiscard]] const std::vector<ParameterGroup>& groups() const { return groups_; }

  /// Same layout with every entry zero.
  [[nodiscard]] ParameterSet zeros_like() const;
  /// Only the listed groups; throws if one is absent.
  [[nodiscard]] ParameterSet subset(const std::vector<std::string>& groups) const;

  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] bool all_finite() const;
  /// True when both sets have identical group/array names and shapes.
  [[nodiscard]] bool same_layout(const ParameterSet& other) const;
  /// Bit-level equality of every entry (and layout).
  [[nodiscard]] bool bit_equal(const ParameterSet& other) const;

  /// Visits (group, array, matrix) in storage order.
  template <typename F>
  void for_each(F&& f) {
    for (auto& g : groups_) {
      for (auto& a : g.arrays) f(g.name, a.name, a.value);
    }
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& g : groups_) {
      for (const auto& a : g.arrays) f(g.name, a.name, a.value);
    }
  }

 private:
  std::vector<ParameterGroup> groups_;
};

}  // namespace sgem
