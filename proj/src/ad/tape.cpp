#include "mfeit/ad/tape.hpp"

#include "mfeit/error.hpp"

namespace mfeit::ad {

ParameterSet::ParameterSet(const ParameterSet& other) { *this = other; }

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this == &other) return *this;
  params_.clear();
  buffers_.clear();
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
  for (const auto& [name, t] : other.buffers_) buffers_.emplace_back(name, std::make_unique<Tensor>(*t));
  return *this;
}

void ParameterSet::check_unique(const std::string& name) const {
  if (name.empty() || name.size() > 0xffff) throw ConfigError("parameter names must be 1..65535 bytes");
  if (has(name)) throw ConfigError("duplicate parameter name '" + name + "'");
}

Parameter& ParameterSet::add(const std::string& name, Tensor value) {
  check_unique(name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Tensor::like(value);
  p->value = std::move(value);
  params_.push_back(std::move(p));
  return *params_.back();
}

Tensor& ParameterSet::add_buffer(const std::string& name, Tensor value) {
  check_unique(name);
  buffers_.emplace_back(name, std::make_unique<Tensor>(std::move(value)));
  return *buffers_.back().second;
}

Parameter& ParameterSet::param(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

const Parameter& ParameterSet::param(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

Tensor& ParameterSet::buffer(const std::string& name) {
  for (auto& [n, t] : buffers_) {
    if (n == name) return *t;
  }
  throw ConfigError("no buffer named '" + name + "'");
}

bool ParameterSet::has(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return true;
  }
  for (const auto& b : buffers_) {
    if (b.first == name) return true;
  }
  return false;
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

const Tensor& Var::value() const { return tape->value(id); }

void Tape::check_open() const {
  if (used_) throw ConfigError("tape already consumed by backward(); record a new forward pass");
}

Var Tape::constant(Tensor value) { return input(std::move(value), false); }

Var Tape::input(Tensor value, bool requires_grad) {
  check_open();
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  check_open();
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return {this, id};
}

Var Tape::push(Tensor value, const std::vector<Var>& parents, Backward backward) {
  check_open();
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (p.tape != this) throw ConfigError("operand recorded on a different tape");
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor::like(n.value);
  return n.grad;
}

void Tape::backward(Var loss) {
  check_open();
  if (loss.tape != this) throw ConfigError("loss was recorded on a different tape");
  if (value(loss.id).size() != 1) throw ConfigError("backward() needs a scalar loss, got " + value(loss.id).shape_string());
  used_ = true;
  grad(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) {
      if (!n.param->grad.same_shape(n.param->value)) n.param->zero_grad();
      n.param->grad.array() += n.grad.array();
    }
  }
}

}  // namespace mfeit::ad
