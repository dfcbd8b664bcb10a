#include "sgem/params.hpp"

#include <cstring>

namespace sgem {

Matrix& ParameterSet::add(const std::string& group, const std::string& array, Matrix value) {
  ParameterGroup* g = find_group(group);
  if (!g) {
    groups_.push_back({group, {}});
    g = &groups_.back();
  }
  for (const auto& a : g->arrays) {
    if (a.name == array) throw Error("duplicate parameter " + group + "/" + array);
  }
  g->arrays.push_back({array, std::move(value)});
  return g->arrays.back().value;
}

ParameterGroup* ParameterSet::find_group(const std::string& group) {
  for (auto& g : groups_) {
    if (g.name == group) return &g;
  }
  return nullptr;
}

const ParameterGroup* ParameterSet::find_group(const std::string& group) const {
  for (const auto& g : groups_) {
    if (g.name == group) return &g;
  }
  return nullptr;
}

Matrix& ParameterSet::at(const std::string& group, const std::string& array) {
  return const_cast<Matrix&>(std::as_const(*this).at(group, array));
}

const Matrix& ParameterSet::at(const std::string& group, const std::string& array) const {
  if (const ParameterGroup* g = find_group(group)) {
    for (const auto& a : g->arrays) {
      if (a.name == array) return a.value;
    }
  }
  throw Error("no parameter " + group + "/" + array);
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out = *this;
  out.for_each([](const std::string&, const std::string&, Matrix& m) { m.setZero(); });
  return out;
}

ParameterSet ParameterSet::subset(const std::vector<std::string>& groups) const {
  ParameterSet out;
  for (const auto& name : groups) {
    const ParameterGroup* g = find_group(name);
    if (!g) throw Error("unknown parameter group '" + name + "'");
    if (out.has_group(name)) continue;
    out.groups_.push_back(*g);
  }
  return out;
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const std::string&, const Matrix& m) {
    n += static_cast<std::size_t>(m.size());
  });
  return n;
}

bool ParameterSet::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (groups_.size() != other.groups_.size()) return false;
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    const auto& a = groups_[i];
    const auto& b = other.groups_[i];
    if (a.name != b.name || a.arrays.size() != b.arrays.size()) return false;
    for (std::size_t j = 0; j < a.arrays.size(); ++j) {
      if (a.arrays[j].name != b.arrays[j].name ||
          a.arrays[j].value.rows() != b.arrays[j].value.rows() ||
          a.arrays[j].value.cols() != b.arrays[j].value.cols()) {
        return false;
      }
    }
  }
  return true;
}

bool ParameterSet::bit_equal(const ParameterSet& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    for (std::size_t j = 0; j < groups_[i].arrays.size(); ++j) {
      const Matrix& a = groups_[i].arrays[j].value;
      const Matrix& b = other.groups_[i].arrays[j].value;
      if (std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) != 0) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace sgem
