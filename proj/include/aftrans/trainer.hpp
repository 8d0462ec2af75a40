#pragma once

#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "aftrans/config.hpp"
#include "aftrans/pipeline.hpp"

namespace aftrans {

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss_global = 0;
    double loss_local = 0;
    double loss_total = 0;
    double train_accuracy = 0;  // global-logits rule, measured during the epoch
    double lr = 0;
};

/// Single-threaded epoch loop: deterministic per-epoch shuffle, per-sample
/// region proposal inside train_step. Stops early when `stop_accuracy` is
/// reached. Returns the per-epoch metrics.
template <typename T>
std::vector<EpochMetrics> train_model(
    Model<T>& model, const std::vector<Sample<T>>& samples, const RunConfig& run,
    SgdOptimizer<T>& opt,
    const std::function<void(const EpochMetrics&)>& on_epoch = nullptr,
    double stop_accuracy = 2.0) {
    if (samples.empty()) throw ValueError("train_model: empty dataset");

    std::mt19937_64 shuffle_rng(run.seed ^ 0x5deece66dULL);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochMetrics> history;
    for (std::size_t epoch = 0; epoch < run.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochMetrics em;
        em.epoch = epoch;
        std::size_t correct = 0, steps = 0;
        for (std::size_t start = 0; start < order.size(); start += run.batch_size) {
            const std::size_t end = std::min(start + run.batch_size, order.size());
            std::vector<Sample<T>> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i)
                batch.push_back(samples[order[i]]);
            auto report = train_step(model, batch, opt);
            em.loss_global += report.loss_global;
            em.loss_local += report.loss_local;
            em.loss_total += report.loss_total;
            em.lr = report.lr;
            correct += report.correct_global;
            ++steps;
        }
        em.loss_global /= static_cast<double>(steps);
        em.loss_local /= static_cast<double>(steps);
        em.loss_total /= static_cast<double>(steps);
        em.train_accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
        history.push_back(em);
        if (on_epoch) on_epoch(em);
        if (em.train_accuracy >= stop_accuracy) break;
    }
    return history;
}

/// Steps the cosine schedule will take for a full run; used to size total_steps.
inline std::size_t planned_total_steps(std::size_t num_samples, std::size_t batch_size,
                                       std::size_t epochs) {
    const std::size_t per_epoch = (num_samples + batch_size - 1) / batch_size;
    return per_epoch * epochs;
}

}  // namespace aftrans
