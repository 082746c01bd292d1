#include "sidrec/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace sidrec {

std::optional<std::size_t> rank_of(const decode_result& candidates, const semantic_id& target) {
    for (std::size_t i = 0; i < candidates.candidates.size(); ++i)
        if (candidates.candidates[i].sid == target) return i + 1;
    return std::nullopt;
}

double hit_at(std::optional<std::size_t> rank, std::size_t k) { return rank && *rank <= k ? 1.0 : 0.0; }

double ndcg_at(std::optional<std::size_t> rank, std::size_t k) {
    if (!rank || *rank > k) return 0.0;
    return 1.0 / std::log2(static_cast<double>(*rank) + 1.0);
}

eval_outcome aggregate(const std::vector<std::optional<std::size_t>>& ranks, const std::vector<std::size_t>& ks) {
    eval_outcome out;
    out.ks = ks;
    out.ranks = ranks;
    for (auto k : ks) {
        double r = 0.0, g = 0.0;
        for (const auto& rank : ranks) {
            r += hit_at(rank, k);
            g += ndcg_at(rank, k);
        }
        const double n = ranks.empty() ? 1.0 : static_cast<double>(ranks.size());
        out.recall[k] = r / n;
        out.ndcg[k] = g / n;
    }
    return out;
}

double validation_score(const eval_outcome& outcome) {
    auto r = outcome.recall.find(10);
    auto g = outcome.ndcg.find(10);
    const double recall = r == outcome.recall.end() ? 0.0 : r->second;
    const double ndcg = g == outcome.ndcg.end() ? 0.0 : g->second;
    return 0.8 * ndcg + 0.2 * recall;
}

namespace {
std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}
} // namespace

std::string eval_outcome::to_report(const std::map<std::string, std::string>& provenance) const {
    std::ostringstream out;
    out << "evaluation over " << ranks.size() << " instances\n";
    for (auto k : ks) out << "  Recall@" << k << " = " << fmt(recall.at(k)) << "   NDCG@" << k << " = " << fmt(ndcg.at(k)) << '\n';
    out << "  invalid SIDs dropped = " << invalid_dropped << '\n';
    out << "\n[results]\n";
    out << "instances=" << ranks.size() << '\n';
    for (auto k : ks) out << "recall@" << k << '=' << fmt(recall.at(k)) << '\n';
    for (auto k : ks) out << "ndcg@" << k << '=' << fmt(ndcg.at(k)) << '\n';
    out << "validation_score=" << fmt(validation_score(*this)) << '\n';
    out << "invalid_dropped=" << invalid_dropped << '\n';
    if (!provenance.empty()) {
        out << "\n[config]\n";
        for (const auto& [k, v] : provenance) out << k << '=' << v << '\n';
    }
    return out.str();
}

bool early_stopper::observe(double score) {
    ++epochs_;
    if (best_epoch_ == 0 || score > best_score_) {
        best_score_ = score;
        best_epoch_ = epochs_;
        since_best_ = 0;
        return false;
    }
    ++since_best_;
    return since_best_ >= patience_;
}

std::string train_trace::to_text() const {
    std::ostringstream out;
    out << "epoch\ttrain_loss\tvalidation_score\n";
    for (std::size_t e = 0; e < validation_scores.size(); ++e)
        out << e + 1 << '\t' << fmt(e < train_losses.size() ? train_losses[e] : 0.0) << '\t'
            << fmt(validation_scores[e]) << '\n';
    out << "\n[trace]\n"
        << "epochs=" << validation_scores.size() << '\n'
        << "best_epoch=" << best_epoch << '\n'
        << "views_per_sample_per_epoch=" << views_per_sample_per_epoch << '\n'
        << "decoder_calls_per_epoch=" << decoder_calls_per_epoch << '\n'
        << "esp=" << esp() << '\n';
    return out.str();
}

} // namespace sidrec
