#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fsg/tensor.hpp"

namespace fsg {

// Reverse-mode autodiff record. Ops executed while a TapeScope is open
// append one node each; backward() replays the nodes newest-first.
//
// A tape and the tensors it references belong to one thread. Every node's
// inputs were produced before it was recorded, so the recording order is
// already topological.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and runs every node in reverse. Gradients
  // accumulate, so callers zero parameter grads between steps. Calling
  // backward twice without reset() throws std::logic_error.
  template <typename T>
  void backward(const Tensor<T>& loss);

  // As above, then reports every parameter the loss never reached on
  // stderr and gives it an explicit zero gradient. Returns the count.
  template <typename T>
  int backward(const Tensor<T>& loss, std::span<Tensor<T>> params);

  void reset();
  std::size_t size() const { return nodes_.size(); }
  std::vector<std::string> op_names() const;

  // The tape ops are currently recording into, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;
  struct Node {
    const char* op;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Makes a tape active for the current thread; restores the previous one on
// destruction.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

namespace detail {

template <typename T, typename... Rest>
bool any_requires_grad(const Tensor<T>& first, const Rest&... rest) {
  if (first.requires_grad()) return true;
  if constexpr (sizeof...(rest) > 0) {
    return any_requires_grad(rest...);
  } else {
    return false;
  }
}

// True when an op over these inputs must record a backward node.
template <typename T, typename... Rest>
bool should_record(const Tensor<T>& first, const Rest&... rest) {
  return Tape::active() != nullptr && any_requires_grad(first, rest...);
}

}  // namespace detail

}  // namespace fsg
