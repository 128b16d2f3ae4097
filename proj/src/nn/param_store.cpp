// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/nn/param_store.hpp"

#include "ifal/errors.hpp"

namespace ifal::nn {

Var ParamStore::add(const std::string& name, Tensor init, bool frozen) {
  if (params_.contains(name)) throw UsageError("duplicate parameter '" + name + "'");
  require_finite(init, name.c_str());
  Entry e{Var(std::move(init), !frozen), frozen};
  auto [it, _] = params_.emplace(name, std::move(e));
  return it->second.var;
}

bool ParamStore::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

const ParamStore::Entry& ParamStore::entry(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

ParamStore::Entry& ParamStore::entry(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

const Var& ParamStore::get(std::string_view name) const { return entry(name).var; }

std::vector<std::string> ParamStore::names(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params_) {
    if (name.starts_with(prefix)) out.push_back(name);
  }
  return out;
}

std::size_t ParamStore::scalar_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& [name, e] : params_) {
    if (name.starts_with(prefix)) n += e.var.value().numel();
  }
  return n;
}

bool ParamStore::frozen(std::string_view name) const { return entry(name).frozen; }

void ParamStore::set_frozen(std::string_view name, bool frozen) {
  Entry& e = entry(name);
  e.frozen = frozen;
  e.var.node()->requires_grad = !frozen;
  if (frozen) e.var.node()->grad = Tensor();
}

void ParamStore::set_frozen_prefix(std::string_view prefix, bool frozen) {
  for (auto& [name, _] : params_) {
    if (name.starts_with(prefix)) set_frozen(name, frozen);
  }
}

void ParamStore::assign(std::string_view name, const Tensor& value) {
  Tensor& dst = mutable_value(name);
  if (dst.shape() != value.shape()) {
    throw DimensionError("assign '" + std::string(name) + "': " + shape_str(dst.shape()) + " <- " +
                         shape_str(value.shape()));
  }
  dst = value;
}

Tensor& ParamStore::mutable_value(std::string_view name) { return entry(name).var.node()->value; }

void ParamStore::zero_grad() {
  for (auto& [_, e] : params_) {
    if (!e.frozen) e.var.node()->grad = Tensor(e.var.shape(), 0.0);
  }
}

void ParamStore::clear_grad() {
  for (auto& [_, e] : params_) e.var.node()->grad = Tensor();
}

}  // namespace ifal::nn
