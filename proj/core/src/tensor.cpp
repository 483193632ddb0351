#include "pugan/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace pugan {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void require_same_shape(const Shape& a, const Shape& b, const std::string& what) {
  if (a == b) return;
  std::ostringstream os;
  os << what << ": shape mismatch " << to_string(a) << " vs " << to_string(b);
  if (a.size() != b.size()) {
    os << " (rank " << a.size() << " vs " << b.size() << ")";
  } else {
    os << " on axis";
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] != b[i]) os << ' ' << i;
  }
  throw ShapeError(os.str());
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != numel(shape_))
    throw ShapeError("tensor data has " + std::to_string(data_.size()) + " elements, shape " +
                     to_string(shape_) + " needs " + std::to_string(numel(shape_)));
}

template <typename T>
int Tensor<T>::dim(int i) const {
  const int r = rank();
  if (i < 0) i += r;
  if (i < 0 || i >= r) throw ShapeError("axis out of range for shape " + to_string(shape_));
  return shape_[i];
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  Tensor out(std::move(shape));
  out.data_ = data_;
  return out;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace pugan
