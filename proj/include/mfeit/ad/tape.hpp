#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "mfeit/ad/tensor.hpp"

namespace mfeit::ad {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value

  std::size_t size() const { return value.size(); }
  void zero_grad() { grad = Tensor::like(value); }
};

/// Named trainable parameters plus non-trainable buffers (e.g. running statistics).
/// Addresses are stable for the lifetime of the set.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Parameter& add(const std::string& name, Tensor value);
  Tensor& add_buffer(const std::string& name, Tensor value);

  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  Tensor& buffer(const std::string& name);
  bool has(const std::string& name) const;

  const std::vector<std::unique_ptr<Parameter>>& params() const { return params_; }
  const std::vector<std::pair<std::string, std::unique_ptr<Tensor>>>& buffers() const { return buffers_; }

  std::size_t parameter_count() const;
  void zero_grad();

 private:
  void check_unique(const std::string& name) const;
  std::vector<std::unique_ptr<Parameter>> params_;
  std::vector<std::pair<std::string, std::unique_ptr<Tensor>>> buffers_;
};

class Tape;

/// Handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const std::vector<int>& shape() const { return value().shape(); }
  bool valid() const { return tape != nullptr; }
};

/// Reverse-mode record. Nodes are appended in execution order and backward
/// visits them in exact reverse order. A tape supports one backward pass.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  explicit Tape(bool training = true) : training_(training) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool training() const { return training_; }

  Var constant(Tensor value);
  Var input(Tensor value, bool requires_grad);
  /// Leaf bound to a parameter; one node per parameter per tape.
  Var param(Parameter& p);

  /// Appends a node; backward runs only if some parent requires a gradient.
  Var push(Tensor value, const std::vector<Var>& parents, Backward backward);

  const Tensor& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  /// Gradient of the loss w.r.t. node id; allocated (zero) on first access.
  Tensor& grad(int id);
  bool has_grad(int id) const { return !nodes_[id].grad.empty(); }

  /// Seeds d loss / d loss = 1, runs all closures and adds leaf gradients into their parameters.
  void backward(Var loss);
  bool used() const { return used_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };
  void check_open() const;

  bool training_;
  bool used_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

}  // namespace mfeit::ad
