#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "crys/errors.hpp"
#include "crys/tensor.hpp"

namespace crys {

/// Adam hyperparameters. Defaults follow the pre-training setup.
struct AdamHyper {
    double learning_rate = 0.03;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Ordered collection of named trainable tensors plus per-parameter Adam
/// moments and the global step counter. Insertion order is the serialization
/// order. Confined to one training thread; frozen reads are safe to share.
class ParamStore {
public:
    /// Throws StateError on duplicate name.
    Tensor& add(const std::string& name, Tensor t);
    /// Throws StateError on unknown name.
    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }
    std::int64_t step() const { return step_; }

    void zero_grads();
    /// Number of scalar elements across all parameters.
    long num_elements() const;

private:
    struct Slot {
        Tensor param;
        std::vector<double> m;
        std::vector<double> v;
    };

    Slot& slot(std::string_view name);
    std::size_t index_of(std::string_view name) const;

    std::vector<std::string> names_;
    std::vector<Slot> slots_;
    std::int64_t step_ = 0;

    friend void adam_step(ParamStore& store, const AdamHyper& hyper);
};

/// One Adam update over every parameter:
///   t <- t+1; m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// Grads are zeroed afterwards. Throws StateError if a parameter's gradient
/// buffer does not match its shape.
void adam_step(ParamStore& store, const AdamHyper& hyper);

}  // namespace crys
