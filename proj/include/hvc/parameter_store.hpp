#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hvc/tensor.hpp"

namespace hvc {

template <typename Scalar>
struct Parameter
{
  std::string name;
  std::vector<std::int64_t> shape;
  Vector<Scalar> value;
  Vector<Scalar> grad;
  // BN running statistics are buffers: they travel with the weights (EMA,
  // checkpoints) but never receive gradients.
  bool trainable = true;

  Eigen::Index size() const
  {
    return value.size();
  }
};

// Named weight tensors with paired gradient buffers. Layers refer to their
// tensors by index, so copying a store together with its layers keeps every
// reference valid.
template <typename Scalar>
class ParameterStore
{
public:
  using scalar_type = Scalar;

  std::size_t add(const std::string& name, std::vector<std::int64_t> shape,
                  bool trainable = true)
  {
    if (index_.count(name))
      throw StoreMismatch("duplicate parameter '" + name + "'");
    std::int64_t n = 1;
    for (auto d : shape)
      n *= d;
    Parameter<Scalar> p;
    p.name = name;
    p.shape = std::move(shape);
    p.value = Vector<Scalar>::Zero(n);
    p.grad = Vector<Scalar>::Zero(n);
    p.trainable = trainable;
    params_.push_back(std::move(p));
    index_[name] = params_.size() - 1;
    return params_.size() - 1;
  }

  Parameter<Scalar>& operator[](std::size_t i)
  {
    return params_[i];
  }

  const Parameter<Scalar>& operator[](std::size_t i) const
  {
    return params_[i];
  }

  Parameter<Scalar>& at(const std::string& name)
  {
    return params_[index_of(name)];
  }

  const Parameter<Scalar>& at(const std::string& name) const
  {
    return params_[index_of(name)];
  }

  std::size_t index_of(const std::string& name) const
  {
    auto it = index_.find(name);
    if (it == index_.end())
      throw StoreMismatch("unknown parameter '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const
  {
    return index_.count(name) != 0;
  }

  std::size_t size() const
  {
    return params_.size();
  }

  auto begin()
  {
    return params_.begin();
  }
  auto end()
  {
    return params_.end();
  }
  auto begin() const
  {
    return params_.begin();
  }
  auto end() const
  {
    return params_.end();
  }

  void zero_grad()
  {
    for (auto& p : params_)
      p.grad.setZero();
  }

  std::int64_t trainable_count() const
  {
    std::int64_t n = 0;
    for (const auto& p : params_)
      if (p.trainable)
        n += p.size();
    return n;
  }

  bool all_finite() const
  {
    for (const auto& p : params_)
      if (!p.value.allFinite())
        return false;
    return true;
  }

  // Throws unless `other` has exactly the same names and shapes.
  void require_same_layout(const ParameterStore& other) const
  {
    if (other.size() != size())
      throw StoreMismatch("parameter stores differ in size");
    for (std::size_t i = 0; i < size(); ++i)
      if (params_[i].name != other[i].name || params_[i].shape != other[i].shape)
        throw StoreMismatch("parameter '" + params_[i].name +
                            "' does not match '" + other[i].name + "'");
  }

  template <typename Other>
  ParameterStore<Other> cast() const
  {
    ParameterStore<Other> out;
    for (const auto& p : params_)
    {
      auto i = out.add(p.name, p.shape, p.trainable);
      out[i].value = p.value.template cast<Other>();
    }
    return out;
  }

private:
  std::vector<Parameter<Scalar>> params_;
  std::map<std::string, std::size_t> index_;
};

} /* namespace hvc */
