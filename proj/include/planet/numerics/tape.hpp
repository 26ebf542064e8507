// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "planet/numerics/rng.hpp"
#include "planet/numerics/tensor.hpp"

namespace planet {

/// A named learnable tensor. `grad` is absent until the first zero_grad()
/// or backward pass touches it.
struct Parameter {
  std::string name;
  Tensor value;
  std::optional<Tensor> grad;

  void zero_grad() { grad = Tensor(value.shape()); }
};

/// Owns parameters with stable addresses, in registration order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value);
  [[nodiscard]] Parameter* find(const std::string& name);
  [[nodiscard]] const Parameter* find(const std::string& name) const;
  [[nodiscard]] std::size_t size() const { return params_.size(); }
  [[nodiscard]] std::size_t num_values() const;
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// Values and discrete decisions that are constants from the gradient's
/// point of view (stop-gradient operands, argmin/argmax/top-k selections).
///
/// In Record mode each such quantity is computed live and appended; in
/// Replay mode the recorded copies are returned in the same order. Replaying
/// lets finite differences evaluate the exact surrogate function whose
/// gradient the tape computes.
class FrozenChoices {
 public:
  enum class Mode { Off, Record, Replay };

  void record() { mode_ = Mode::Record; values_.clear(); indices_.clear(); rewind(); }
  void replay() { mode_ = Mode::Replay; rewind(); }
  void off() { mode_ = Mode::Off; }
  [[nodiscard]] Mode mode() const { return mode_; }

  Tensor value(Tensor live);
  std::vector<std::size_t> indices(std::vector<std::size_t> live);

 private:
  void rewind() { value_cursor_ = 0; index_cursor_ = 0; }

  Mode mode_ = Mode::Off;
  std::vector<Tensor> values_;
  std::vector<std::vector<std::size_t>> indices_;
  std::size_t value_cursor_ = 0;
  std::size_t index_cursor_ = 0;
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] std::size_t rows() const { return value().rows(); }
  [[nodiscard]] std::size_t cols() const { return value().cols(); }
  [[nodiscard]] Tape& tape() const { return *tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }
  [[nodiscard]] bool needs_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode computation record for one forward pass.
///
/// Nodes are appended in execution order, so every input id is smaller than
/// its consumer's id and a reverse sweep is a valid topological order.
class Tape {
 public:
  /// Backward rule: reads the node's output gradient, accumulates into inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& p);

  /// Appends an op node. `backward` runs only if some input needs a gradient.
  /// Throws NumericalError if `value` has a non-finite entry.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Adds `g` to the gradient of node `v` (allocating it on first use).
  void accumulate(const Var& v, const Tensor& g);
  /// Mutable gradient buffer of `v`, allocating zeros on first use.
  Tensor& grad_buffer(const Var& v);

  /// Propagates d(loss)/d(node) to every node and adds leaf gradients into
  /// their Parameters. Node gradients are reset first; parameter gradients
  /// accumulate across calls.
  void backward(const Var& loss);

  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Training mode enables dropout.
  bool training = false;
  double dropout = 0.0;
  /// Source of dropout masks; required when training with dropout > 0.
  Rng* dropout_rng = nullptr;
  /// Optional stop-gradient/selection recorder.
  FrozenChoices* frozen = nullptr;

  Tensor freeze(Tensor live) { return frozen ? frozen->value(std::move(live)) : live; }
  std::vector<std::size_t> freeze(std::vector<std::size_t> live) {
    return frozen ? frozen->indices(std::move(live)) : live;
  }

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

}  // namespace planet
