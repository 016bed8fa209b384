#pragma once

// Shuffled mini-batch training with Adam on pre-normalised snapshot sequences.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdasim/nn/adam.hpp"
#include "cdasim/nn/network.hpp"

namespace cdasim::nn {

struct TrainConfig {
    std::size_t batch_size = 16384;
    int epochs = 20;
    double learning_rate = 1.5e-5;
    std::uint64_t seed = 1;
    int seq_len = 1;
};

/// Normalised inputs/targets grouped by session. A sample ends at any row with at
/// least seq_len - 1 predecessors in the same session.
class Dataset {
  public:
    explicit Dataset(int seq_len = 1) : seq_len_(seq_len) {
        if (seq_len < 1) throw std::invalid_argument("Dataset: seq_len must be >= 1");
    }

    void add_session(std::span<const FeatureRecord> records, const NormStats& stats) {
        const std::size_t first = inputs_.size();
        for (const auto& r : records) {
            inputs_.push_back(normalize_inputs(r.inputs(), stats));
            targets_.push_back(normalize_target(r.trade_price, stats));
        }
        const auto len = static_cast<std::size_t>(seq_len_);
        for (std::size_t i = first; i < inputs_.size(); ++i)
            if (i + 1 - first >= len) ends_.push_back(i);
    }

    std::size_t size() const noexcept { return ends_.size(); }
    bool empty() const noexcept { return ends_.empty(); }
    int seq_len() const noexcept { return seq_len_; }

    Sample sample(std::size_t k) const {
        const std::size_t end = ends_[k];
        const auto len = static_cast<std::size_t>(seq_len_);
        return {std::span<const InputVector>(inputs_).subspan(end + 1 - len, len), targets_[end]};
    }

  private:
    int seq_len_;
    std::vector<InputVector> inputs_;
    std::vector<double> targets_;
    std::vector<std::size_t> ends_;
};

struct TrainResult {
    ModelParams model;
    std::vector<double> epoch_loss;  // mean per-sample squared error seen during each epoch
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Deterministic for a given seed: initialisation, shuffling and reduction order are fixed.
inline TrainResult train(const Dataset& data, const NormStats& norm, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (cfg.seq_len != data.seq_len()) throw std::invalid_argument("train: seq_len differs from dataset");

    TrainResult result;
    result.model = init_model(cfg.seed, cfg.seq_len);
    result.model.norm = norm;
    AdamState adam;
    adam.learning_rate = cfg.learning_rate;
    Rng shuffle_rng(mix_seed(cfg.seed, 1));

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Sample> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t k = start; k < stop; ++k) batch.push_back(data.sample(order[k]));
            Gradients g = backward(result.model, batch);
            sum += g.mse * static_cast<double>(batch.size());
            adam_step(adam, result.model, g.grad);
        }
        const double loss = sum / static_cast<double>(order.size());
        result.epoch_loss.push_back(loss);
        if (on_epoch) on_epoch(epoch + 1, loss);
    }
    return result;
}

}  // namespace cdasim::nn
