#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace quann {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// std::allocator that leaves elements default-initialized, so buffer(n) does
// not zero memory that is about to be overwritten.
template <class T>
struct DefaultInitAllocator : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  using std::allocator<T>::allocator;

  template <class U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

// Uninitialized when sized with Buffer(n); Buffer(n, 0.0) zeroes as usual.
using Buffer = std::vector<double, DefaultInitAllocator<double>>;

namespace detail {
struct TensorStorage {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};
}  // namespace detail

// Dense row-major float64 array with an optional gradient slot.
//
// Tensor is a handle: copies share storage, which is how the tape and the
// optimizer see the same parameter. Use clone() for an independent copy.
// Shape {} is a scalar with one element.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor from_buffer(Shape shape, Buffer data, bool requires_grad = false);
  // Values left uninitialized; the caller overwrites every element.
  static Tensor empty(Shape shape);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(s_); }
  bool same_storage(const Tensor& other) const noexcept { return s_ == other.s_; }

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return s_->data.size(); }

  std::span<const double> data() const { return s_->data; }
  std::span<double> mutable_data() { return s_->data; }
  double item() const;
  double at(std::size_t i) const { return s_->data.at(i); }
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) { s_->requires_grad = on; }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  // Gradient buffer, allocated as zeros on first use.
  // Handles share storage, so this is const like the handle itself.
  std::span<double> grad_buffer() const;
  // Uninitialized gradient storage for a kernel that overwrites all of it;
  // only valid while has_grad() is false.
  std::span<double> fresh_grad_buffer() const;
  void zero_grad();
  void clear_grad() { Buffer().swap(s_->grad); }

  // Deep copy of the values; the copy has no gradient and does not require one.
  Tensor clone() const;

 private:
  std::shared_ptr<detail::TensorStorage> s_;
};

}  // namespace quann
