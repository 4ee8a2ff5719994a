#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tridiff/tensor.hpp"

namespace tridiff {

// Named learnable tensors with freeze metadata. Iteration order is insertion
// order so optimizer updates and checkpoints are deterministic.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        bool frozen = false;                // whole-tensor freeze
        std::vector<int64_t> frozen_rows;   // per-row freeze (embedding tables)
    };

    Tensor add(const std::string& name, Tensor t) {
        if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
        index_[name] = entries_.size();
        entries_.push_back({name, t, false, {}});
        return t;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
        return entries_[it->second].tensor;
    }

    Entry& entry(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
        return entries_[it->second];
    }

    void mark_frozen(const std::string& name) { entry(name).frozen = true; }
    void freeze_rows(const std::string& name, std::vector<int64_t> rows) {
        entry(name).frozen_rows = std::move(rows);
    }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    void zero_grads() {
        for (auto& e : entries_) e.tensor.zero_grad();
    }

    // zero out gradient rows under row-freeze and whole frozen tensors
    void clamp_frozen_grads() {
        for (auto& e : entries_) {
            if (e.frozen) {
                e.tensor.zero_grad();
                continue;
            }
            if (e.frozen_rows.empty()) continue;
            const int64_t cols = e.tensor.shape().back();
            auto& g = e.tensor.grad();
            for (int64_t r : e.frozen_rows)
                for (int64_t c = 0; c < cols; ++c) g[r * cols + c] = 0.0;
        }
    }

    std::vector<Tensor> tensors() const {
        std::vector<Tensor> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.push_back(e.tensor);
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Adam with decoupled weight decay. Frozen tensors/rows are never touched and
// their moments stay zero.
class Adam {
public:
    using Filter = std::function<bool(const ParamStore::Entry&)>;

    void step(ParamStore& params, const AdamConfig& cfg, const Filter& trainable = nullptr);

    int64_t step_count() const { return t_; }

    // checkpoint access
    struct State {
        int64_t t = 0;
        std::vector<std::pair<std::string, std::vector<double>>> m, v;
    };
    State state() const;
    void restore(const State& s);

private:
    int64_t t_ = 0;
    std::unordered_map<std::string, std::vector<double>> m_, v_;
    std::vector<std::string> order_;  // insertion order for serialization
};

}  // namespace tridiff
