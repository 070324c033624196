#include "fsg/tape.hpp"

#include <iostream>
#include <stdexcept>

#include "fsg/errors.hpp"

namespace fsg {

namespace {
thread_local Tape* g_active = nullptr;
}

Tape* Tape::active() { return g_active; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

void Tape::record(const char* op, BackwardFn fn) {
  if (consumed_) {
    throw std::logic_error("recording onto a tape that already ran backward; call reset()");
  }
  nodes_.push_back({op, std::move(fn)});
}

template <typename T>
void Tape::backward(const Tensor<T>& loss) {
  if (consumed_) throw std::logic_error("backward called twice without reset()");
  if (loss.size() != 1) {
    throw ShapeError("backward expects a scalar loss, got " + loss.shape().str());
  }
  consumed_ = true;
  // A const handle still aliases the loss storage.
  Tensor<T> seed = loss;
  seed.grad()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
}

template <typename T>
int Tape::backward(const Tensor<T>& loss, std::span<Tensor<T>> params) {
  backward(loss);
  int disconnected = 0;
  for (auto& p : params) {
    if (!p.has_grad()) {
      ++disconnected;
      p.grad();
    }
  }
  if (disconnected > 0) {
    std::cerr << "warning: " << disconnected
              << " parameter tensor(s) not reached by backward; gradients left at zero\n";
  }
  return disconnected;
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto& n : nodes_) names.emplace_back(n.op);
  return names;
}

template void Tape::backward(const Tensor<float>&);
template void Tape::backward(const Tensor<double>&);
template int Tape::backward(const Tensor<float>&, std::span<Tensor<float>>);
template int Tape::backward(const Tensor<double>&, std::span<Tensor<double>>);

}  // namespace fsg
