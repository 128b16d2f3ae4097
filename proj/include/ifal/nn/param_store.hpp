// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ifal/nn/autograd.hpp"

namespace ifal::nn {

// Named trainable leaves. Each parameter is a Var whose node persists across
// steps, so its grad slot accumulates until the optimizer clears it. Frozen
// parameters are leaves with requires_grad off: backward never reaches them.
class ParamStore {
 public:
  // Registers a new parameter; throws UsageError on duplicate names.
  Var add(const std::string& name, Tensor init, bool frozen = false);

  bool contains(std::string_view name) const;
  const Var& get(std::string_view name) const;
  std::vector<std::string> names(std::string_view prefix = "") const;  // sorted
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count(std::string_view prefix = "") const;

  bool frozen(std::string_view name) const;
  void set_frozen(std::string_view name, bool frozen);
  // Applies to every parameter whose name starts with `prefix`.
  void set_frozen_prefix(std::string_view prefix, bool frozen);

  // Copies `value` into an existing parameter in place (shape must match).
  void assign(std::string_view name, const Tensor& value);
  Tensor& mutable_value(std::string_view name);

  // Gives every trainable parameter an all-zero gradient slot.
  void zero_grad();
  // Empties all gradient slots.
  void clear_grad();

 private:
  struct Entry {
    Var var;
    bool frozen = false;
  };
  const Entry& entry(std::string_view name) const;
  Entry& entry(std::string_view name);

  std::map<std::string, Entry, std::less<>> params_;
};

}  // namespace ifal::nn
