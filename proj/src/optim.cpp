#include "crys/optim.hpp"

#include <cmath>

namespace crys {

void AdamHyper::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate must be > 0, got " + std::to_string(learning_rate));
    if (!(beta1 > 0.0 && beta1 < 1.0))
        throw ConfigError("beta1 must be in (0,1), got " + std::to_string(beta1));
    if (!(beta2 > 0.0 && beta2 < 1.0))
        throw ConfigError("beta2 must be in (0,1), got " + std::to_string(beta2));
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw ConfigError("epsilon must be > 0, got " + std::to_string(epsilon));
}

std::size_t ParamStore::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return i;
    return names_.size();
}

Tensor& ParamStore::add(const std::string& name, Tensor t) {
    if (contains(name)) throw StateError("duplicate parameter name: " + name);
    Slot s;
    s.m.assign(static_cast<std::size_t>(t.size()), 0.0);
    s.v.assign(static_cast<std::size_t>(t.size()), 0.0);
    s.param = std::move(t);
    names_.push_back(name);
    slots_.push_back(std::move(s));
    return slots_.back().param;
}

ParamStore::Slot& ParamStore::slot(std::string_view name) {
    std::size_t i = index_of(name);
    if (i == names_.size()) throw StateError("unknown parameter name: " + std::string(name));
    return slots_[i];
}

Tensor& ParamStore::at(std::string_view name) { return slot(name).param; }

const Tensor& ParamStore::at(std::string_view name) const {
    return const_cast<ParamStore*>(this)->slot(name).param;
}

bool ParamStore::contains(std::string_view name) const {
    return index_of(name) != names_.size();
}

void ParamStore::zero_grads() {
    for (Slot& s : slots_) s.param.zero_grad();
}

long ParamStore::num_elements() const {
    long n = 0;
    for (const Slot& s : slots_) n += s.param.size();
    return n;
}

void adam_step(ParamStore& store, const AdamHyper& hyper) {
    for (std::size_t i = 0; i < store.slots_.size(); ++i) {
        const Tensor& p = store.slots_[i].param;
        if (p.grad.size() != p.values.size())
            throw StateError("parameter '" + store.names_[i] + "' has no gradient buffer");
    }
    store.step_ += 1;
    const double t = static_cast<double>(store.step_);
    const double bc1 = 1.0 - std::pow(hyper.beta1, t);
    const double bc2 = 1.0 - std::pow(hyper.beta2, t);
    for (ParamStore::Slot& s : store.slots_) {
        Tensor& p = s.param;
        const std::size_t n = p.values.size();
        for (std::size_t k = 0; k < n; ++k) {
            const double g = p.grad[k];
            s.m[k] = hyper.beta1 * s.m[k] + (1.0 - hyper.beta1) * g;
            s.v[k] = hyper.beta2 * s.v[k] + (1.0 - hyper.beta2) * g * g;
            const double mhat = s.m[k] / bc1;
            const double vhat = s.v[k] / bc2;
            p.values[k] -= hyper.learning_rate * mhat / (std::sqrt(vhat) + hyper.epsilon);
        }
        p.zero_grad();
    }
}

}  // namespace crys
