#pragma once

#include "sidrec/decoding.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sidrec {

// 1-based rank of target among the candidates, if present.
std::optional<std::size_t> rank_of(const decode_result& candidates, const semantic_id& target);

// Single relevant item: hit@K = [rank <= K], ndcg@K = 1 / log2(rank + 1) on a hit.
double hit_at(std::optional<std::size_t> rank, std::size_t k);
double ndcg_at(std::optional<std::size_t> rank, std::size_t k);

struct eval_outcome {
    std::vector<std::size_t> ks;
    std::map<std::size_t, double> recall;
    std::map<std::size_t, double> ndcg;
    std::vector<std::optional<std::size_t>> ranks; // per instance
    std::size_t invalid_dropped = 0;               // candidates removed by catalog filtering

    std::string to_report(const std::map<std::string, std::string>& provenance = {}) const;
};

// Means over instances.
eval_outcome aggregate(const std::vector<std::optional<std::size_t>>& ranks, const std::vector<std::size_t>& ks);

// 0.8 * NDCG@10 + 0.2 * Recall@10
double validation_score(const eval_outcome& outcome);

// Stops once the score has not improved for `patience` consecutive epochs.
class early_stopper {
public:
    explicit early_stopper(std::size_t patience) : patience_(patience) {}

    // Records the next epoch's score; returns true when training should stop.
    bool observe(double score);

    std::size_t best_epoch() const { return best_epoch_; } // 1-based, 0 before any epoch
    double best_score() const { return best_score_; }
    std::size_t epochs_seen() const { return epochs_; }

private:
    std::size_t patience_;
    std::size_t epochs_ = 0;
    std::size_t best_epoch_ = 0;
    double best_score_ = 0.0;
    std::size_t since_best_ = 0;
};

struct train_trace {
    std::vector<double> validation_scores; // per epoch
    std::vector<double> train_losses;      // per epoch
    std::size_t best_epoch = 0;
    std::size_t views_per_sample_per_epoch = 0;
    std::size_t decoder_calls_per_epoch = 0; // noising cost, refresh variants included

    // Effective sample passes.
    std::size_t esp() const { return best_epoch * views_per_sample_per_epoch; }
    std::string to_text() const;
};

} // namespace sidrec
