// SPDX-License-Identifier: Apache-2.0
#include "planet/numerics/tape.hpp"

#include "planet/numerics/errors.hpp"

namespace planet {

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (find(name) != nullptr) throw ContractError("parameter registered twice: " + name);
  params_.push_back(std::make_unique<Parameter>(Parameter{std::move(name), std::move(value), std::nullopt}));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

std::size_t ParameterStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

Tensor FrozenChoices::value(Tensor live) {
  switch (mode_) {
    case Mode::Off:
      return live;
    case Mode::Record:
      values_.push_back(live);
      return live;
    case Mode::Replay:
      if (value_cursor_ >= values_.size()) throw ContractError("frozen replay: value stream exhausted");
      return values_[value_cursor_++];
  }
  return live;
}

std::vector<std::size_t> FrozenChoices::indices(std::vector<std::size_t> live) {
  switch (mode_) {
    case Mode::Off:
      return live;
    case Mode::Record:
      indices_.push_back(live);
      return live;
    case Mode::Replay:
      if (index_cursor_ >= indices_.size()) throw ContractError("frozen replay: index stream exhausted");
      return indices_[index_cursor_++];
  }
  return live;
}

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::needs_grad() const { return tape_->needs_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), std::nullopt, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  nodes_.push_back(Node{p.value, std::nullopt, true, &p, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericalError("non-finite value produced by op #" + std::to_string(nodes_.size()));
  }
  bool needs = false;
  for (const auto& in : inputs) {
    if (!in.valid() || &in.tape() != this) throw ContractError("op input recorded on a different tape");
    needs = needs || nodes_[in.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), std::nullopt, needs, nullptr, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& v, const Tensor& g) {
  Node& n = nodes_[v.id()];
  if (!n.needs_grad) return;
  if (!n.grad) {
    n.grad = g;
  } else {
    n.grad->add_(g);
  }
}

Tensor& Tape::grad_buffer(const Var& v) {
  Node& n = nodes_[v.id()];
  if (!n.grad) n.grad = Tensor(n.value.shape());
  return *n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.value().shape()));
  }
  if (nodes_.empty()) throw ContractError("backward: empty tape");
  for (auto& n : nodes_) n.grad.reset();
  if (!nodes_[loss.id()].needs_grad) return;
  nodes_[loss.id()].grad = Tensor(loss.value().shape(), 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad) continue;
    if (n.param != nullptr) {
      if (!n.param->grad) {
        n.param->grad = *n.grad;
      } else {
        n.param->grad->add_(*n.grad);
      }
    } else if (n.backward) {
      // Rules only write to lower ids; nodes_ is never resized here.
      n.backward(*this, *n.grad);
    }
  }
}

}  // namespace planet
