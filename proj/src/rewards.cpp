#include "idforge/rewards.hpp"

#include "idforge/io.hpp"

#include <algorithm>
#include <cmath>

namespace idforge {

namespace {

void check_unit(const Vec& f, const char* where) {
    if (std::abs(norm(f) - 1.0) > 1e-6) {
        throw ArgumentError(std::string(where) + ": feature is not unit-normalized");
    }
}

} // namespace

const BankEntry& MemoryBank::at(std::size_t y) const {
    auto it = entries.find(y);
    if (it == entries.end()) {
        throw LabelError("memory bank has no identity " + std::to_string(y));
    }
    return it->second;
}

MemoryBank build_bank(const std::map<std::size_t, std::vector<Vec>>& features_by_id) {
    if (features_by_id.empty()) throw ArgumentError("build_bank: no identities");
    MemoryBank bank;
    for (const auto& [y, feats] : features_by_id) {
        if (feats.empty()) {
            throw ArgumentError("build_bank: identity " + std::to_string(y) + " has no features");
        }
        BankEntry entry;
        entry.feats.reserve(feats.size());
        for (const auto& f : feats) {
            if (bank.feat_dim == 0) bank.feat_dim = f.size();
            check_dim(f.size(), bank.feat_dim, "build_bank feature");
            entry.feats.push_back(normalized(f));
        }

        Vec mean(bank.feat_dim, 0.0);
        for (const auto& f : entry.feats) axpy_into(mean, 1.0, f);
        for (auto& v : mean) v /= static_cast<double>(entry.feats.size());
        if (norm(mean) <= 1e-12) {
            throw NumericError("build_bank: degenerate prototype for identity " +
                               std::to_string(y));
        }
        entry.prototype = normalized(mean);

        if (entry.feats.size() >= 2) {
            entry.trace = trace_cov(entry.feats);
            entry.has_trace = true;
        }
        bank.entries.emplace(y, std::move(entry));
    }
    return bank;
}

double median_pairwise_distance(const MemoryBank& bank) {
    std::vector<const Vec*> all;
    for (const auto& [y, entry] : bank.entries) {
        for (const auto& f : entry.feats) all.push_back(&f);
    }
    if (all.size() < 2) {
        throw ArgumentError("median_pairwise_distance: need at least two bank features");
    }
    std::vector<double> dists;
    dists.reserve(all.size() * (all.size() - 1) / 2);
    for (std::size_t i = 0; i < all.size(); ++i) {
        for (std::size_t j = i + 1; j < all.size(); ++j) {
            dists.push_back(std::sqrt(sq_dist(*all[i], *all[j])));
        }
    }
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    return *mid;
}

RewardWeights resolved_weights(const RewardWeights& w, const MemoryBank& bank) {
    RewardWeights out = w;
    if (out.sigma == 0.0) {
        out.sigma = median_pairwise_distance(bank);
        if (!(out.sigma > 0.0)) {
            throw NumericError("resolved_weights: median bandwidth collapsed to zero");
        }
    }
    if (!(out.sigma > 0.0)) throw ArgumentError("resolved_weights: sigma must be > 0");
    if (!(out.alpha > 0.0)) throw ArgumentError("resolved_weights: alpha must be > 0");
    if (out.epsilon_expand < 0.0) {
        throw ArgumentError("resolved_weights: epsilon_expand must be >= 0");
    }
    if (out.tau < 0.0) throw ArgumentError("resolved_weights: tau must be >= 0");
    if (!(out.eps_std > 0.0)) throw ArgumentError("resolved_weights: eps_std must be > 0");
    return out;
}

double semantic_reward(const Vec& f_g, const MemoryBank& bank, std::size_t y) {
    const BankEntry& entry = bank.at(y);
    check_unit(f_g, "semantic_reward");
    check_dim(f_g.size(), entry.prototype.size(), "semantic_reward feature");
    const double c = dot(f_g, entry.prototype);
    return std::clamp((c + 1.0) / 2.0, 0.0, 1.0);
}

double rbf_kernel(const Vec& u, const Vec& v, double sigma) {
    if (!(sigma > 0.0)) throw ArgumentError("rbf_kernel: sigma must be > 0");
    return std::exp(-sq_dist(u, v) / (2.0 * sigma * sigma));
}

double coverage_reward(const std::vector<Vec>& gen_feats, const MemoryBank& bank, std::size_t y,
                       double sigma, double alpha, bool include_self_pairs) {
    if (gen_feats.empty()) throw ArgumentError("coverage_reward: empty generated set");
    if (!(sigma > 0.0)) throw ArgumentError("coverage_reward: sigma must be > 0");
    const BankEntry& entry = bank.at(y);

    double cross = 0.0;
    for (const auto& g : gen_feats) {
        for (const auto& f : entry.feats) cross += rbf_kernel(g, f, sigma);
    }
    cross /= static_cast<double>(gen_feats.size() * entry.feats.size());

    const std::size_t b = gen_feats.size();
    double within = 0.0;
    if (include_self_pairs) {
        for (const auto& g : gen_feats) {
            for (const auto& h : gen_feats) within += rbf_kernel(g, h, sigma);
        }
        within /= static_cast<double>(b * b);
    } else if (b > 1) {
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < b; ++j) {
                if (i != j) within += rbf_kernel(gen_feats[i], gen_feats[j], sigma);
            }
        }
        within /= static_cast<double>(b * (b - 1));
    } // single sample with the diagonal excluded: no pairs, no penalty

    return cross - alpha * within;
}

double trace_cov(const std::vector<Vec>& feats) {
    if (feats.size() < 2) throw ArgumentError("trace_cov: need at least two features");
    const std::size_t dim = feats.front().size();
    Vec mean(dim, 0.0);
    for (const auto& f : feats) {
        check_dim(f.size(), dim, "trace_cov feature");
        axpy_into(mean, 1.0, f);
    }
    for (auto& v : mean) v /= static_cast<double>(feats.size());

    double acc = 0.0;
    for (const auto& f : feats) acc += sq_dist(f, mean);
    return acc / static_cast<double>(feats.size() - 1);
}

double expansion_reward(double s_g, double s_r, double epsilon_expand, double tau) {
    if (!(tau > 0.0)) throw ArgumentError("expansion_reward: tau must be > 0");
    if (s_g < 0.0 || s_r < 0.0) throw ArgumentError("expansion_reward: traces must be >= 0");
    const double dev = (s_g - (1.0 + epsilon_expand) * s_r) / tau;
    return -dev * dev;
}

std::vector<double> standardize(const std::vector<double>& values, double eps_std) {
    if (values.empty()) throw ArgumentError("standardize: empty batch");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= n; // population
    const double denom = std::sqrt(var) + eps_std;
    std::vector<double> out;
    out.reserve(values.size());
    for (double v : values) out.push_back((v - mean) / denom);
    return out;
}

double combine(double r_sem_std, double r_cov_std, double r_exp_std, const RewardWeights& w) {
    const double t = std::tanh(w.lambda_sem * r_sem_std + w.lambda_cov * r_cov_std +
                               w.lambda_exp * r_exp_std);
    // tanh rounds to exactly +/-1 past ~19; keep the documented open interval.
    const double lim = std::nextafter(1.0, 0.0);
    return std::clamp(t, -lim, lim);
}

IdentityBatchScore score_identity_batch(const std::vector<Vec>& gen_feats, std::size_t y,
                                        const MemoryBank& bank, const RewardWeights& w) {
    if (gen_feats.empty()) throw ArgumentError("score_identity_batch: empty batch");
    const RewardWeights rw = resolved_weights(w, bank);
    const BankEntry& entry = bank.at(y);

    IdentityBatchScore score;
    score.y = y;
    score.r_sem.reserve(gen_feats.size());
    for (const auto& g : gen_feats) score.r_sem.push_back(semantic_reward(g, bank, y));

    score.r_cov =
        coverage_reward(gen_feats, bank, y, rw.sigma, rw.alpha, rw.cov_include_self_pairs);

    if (gen_feats.size() >= 2) {
        if (!entry.has_trace) {
            throw StateError("score_identity_batch: identity " + std::to_string(y) +
                             " has a single reference feature, no spread target");
        }
        const double tau = rw.tau > 0.0 ? rw.tau : 0.1 * entry.trace;
        if (!(tau > 0.0)) {
            throw NumericError("score_identity_batch: auto tau collapsed to zero "
                               "(reference features are identical)");
        }
        score.s_g = trace_cov(gen_feats);
        score.r_exp = expansion_reward(score.s_g, entry.trace, rw.epsilon_expand, tau);
    } else {
        // One sample carries no spread estimate; contribute a neutral value.
        score.s_g = 0.0;
        score.r_exp = 0.0;
    }
    return score;
}

std::vector<std::vector<RewardBreakdown>> finalize_step(
    const std::vector<IdentityBatchScore>& scores, const RewardWeights& w) {
    if (scores.empty()) throw ArgumentError("finalize_step: no identity batches");

    std::vector<std::vector<RewardBreakdown>> out(scores.size());
    for (std::size_t b = 0; b < scores.size(); ++b) {
        if (scores[b].batch_size() == 0) throw ArgumentError("finalize_step: empty batch");
        out[b].resize(scores[b].batch_size());
        for (std::size_t i = 0; i < scores[b].batch_size(); ++i) {
            out[b][i].r_sem = scores[b].r_sem[i];
            out[b][i].r_cov = scores[b].r_cov;
            out[b][i].r_exp = scores[b].r_exp;
        }
    }

    // Semantic term: standardized over all samples of the step pooled
    // (default), or within each identity batch when configured.
    if (w.per_identity_standardize) {
        for (std::size_t b = 0; b < scores.size(); ++b) {
            const std::vector<double> std_sem = standardize(scores[b].r_sem, w.eps_std);
            for (std::size_t i = 0; i < std_sem.size(); ++i) out[b][i].r_sem_std = std_sem[i];
        }
    } else {
        std::vector<double> pooled;
        for (const auto& s : scores) pooled.insert(pooled.end(), s.r_sem.begin(), s.r_sem.end());
        const std::vector<double> std_sem = standardize(pooled, w.eps_std);
        std::size_t cursor = 0;
        for (std::size_t b = 0; b < scores.size(); ++b) {
            for (std::size_t i = 0; i < scores[b].batch_size(); ++i) {
                out[b][i].r_sem_std = std_sem[cursor++];
            }
        }
    }

    // Batch-level terms: one value per identity batch, standardized across
    // the step's batches, broadcast back to every sample.
    std::vector<double> cov_vals, exp_vals;
    cov_vals.reserve(scores.size());
    exp_vals.reserve(scores.size());
    for (const auto& s : scores) {
        cov_vals.push_back(s.r_cov);
        exp_vals.push_back(s.r_exp);
    }
    const std::vector<double> std_cov = standardize(cov_vals, w.eps_std);
    const std::vector<double> std_exp = standardize(exp_vals, w.eps_std);

    for (std::size_t b = 0; b < scores.size(); ++b) {
        for (auto& bd : out[b]) {
            bd.r_cov_std = std_cov[b];
            bd.r_exp_std = std_exp[b];
            bd.r_norm = combine(bd.r_sem_std, bd.r_cov_std, bd.r_exp_std, w);
        }
    }
    return out;
}

std::vector<RewardBreakdown> compute_batch(const std::vector<Vec>& gen_feats, std::size_t y,
                                           const MemoryBank& bank, const RewardWeights& w) {
    return finalize_step({score_identity_batch(gen_feats, y, bank, w)}, w).front();
}

std::vector<std::string> reward_csv_header() {
    return {"step",      "identity",  "sample",    "r_sem",  "r_cov",
            "r_exp",     "r_sem_std", "r_cov_std", "r_exp_std", "r_norm"};
}

std::vector<std::string> reward_csv_row(std::size_t step, std::size_t y, std::size_t sample_idx,
                                        const RewardBreakdown& bd) {
    return {std::to_string(step),        std::to_string(y),
            std::to_string(sample_idx),  format_double(bd.r_sem),
            format_double(bd.r_cov),     format_double(bd.r_exp),
            format_double(bd.r_sem_std), format_double(bd.r_cov_std),
            format_double(bd.r_exp_std), format_double(bd.r_norm)};
}

} // namespace idforge
