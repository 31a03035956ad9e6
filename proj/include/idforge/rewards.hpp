#pragma once

#include "idforge/tensor.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace idforge {

// Frozen per-identity reference features with cached statistics. Immutable
// after build_bank so rewards stay stationary while the sampler trains.
struct BankEntry {
    std::vector<Vec> feats; // unit-norm on ingest
    Vec prototype;          // unit-norm mean direction
    double trace = 0.0;     // reference spread S_r; valid only when has_trace
    bool has_trace = false;

    std::size_t count() const { return feats.size(); }
};

struct MemoryBank {
    std::map<std::size_t, BankEntry> entries;
    std::size_t feat_dim = 0;

    bool has(std::size_t y) const { return entries.count(y) != 0; }
    const BankEntry& at(std::size_t y) const;
};

MemoryBank build_bank(const std::map<std::size_t, std::vector<Vec>>& features_by_id);

struct RewardWeights {
    double lambda_sem = 1.0;
    double lambda_cov = 0.75;
    double lambda_exp = 0.25;
    double sigma = 0.0;         // kernel bandwidth; 0 = median heuristic over the bank
    double alpha = 0.5;         // redundancy coefficient
    double epsilon_expand = 0.1;
    double tau = 0.0;           // expansion temperature; 0 = 0.1 * S_r per identity
    double eps_std = 1e-8;
    bool cov_include_self_pairs = true; // literal reading of the within-set expectation
    bool per_identity_standardize = false; // alternative population for the semantic term
};

// Median pairwise distance across all features pooled over identities.
double median_pairwise_distance(const MemoryBank& bank);

// Returns a copy with sigma materialized (median heuristic when 0) so the
// effective bandwidth can be logged per run. tau stays 0 when per-identity.
RewardWeights resolved_weights(const RewardWeights& w, const MemoryBank& bank);

// (cos + 1)/2 against the identity prototype.
double semantic_reward(const Vec& f_g, const MemoryBank& bank, std::size_t y);

double rbf_kernel(const Vec& u, const Vec& v, double sigma);

// Mean cross-kernel to the references minus alpha * mean within-set kernel.
double coverage_reward(const std::vector<Vec>& gen_feats, const MemoryBank& bank, std::size_t y,
                       double sigma, double alpha, bool include_self_pairs = true);

// Trace of the sample covariance, computed without materializing the matrix.
double trace_cov(const std::vector<Vec>& feats);

// -((S_g - (1+eps) S_r)/tau)^2: zero exactly at the target expansion level.
double expansion_reward(double s_g, double s_r, double epsilon_expand, double tau);

// (v - mean)/(population std + eps).
std::vector<double> standardize(const std::vector<double>& values, double eps_std);

double combine(double r_sem_std, double r_cov_std, double r_exp_std, const RewardWeights& w);

// Raw component scores of one identity batch (B generated features of one y).
struct IdentityBatchScore {
    std::size_t y = 0;
    std::vector<double> r_sem; // per sample
    double r_cov = 0.0;
    double r_exp = 0.0;
    double s_g = 0.0; // generated spread; 0 when B == 1 (no estimate)

    std::size_t batch_size() const { return r_sem.size(); }
};

IdentityBatchScore score_identity_batch(const std::vector<Vec>& gen_feats, std::size_t y,
                                        const MemoryBank& bank, const RewardWeights& w);

struct RewardBreakdown {
    double r_sem = 0.0;
    double r_cov = 0.0; // batch value, broadcast
    double r_exp = 0.0; // batch value, broadcast
    double r_sem_std = 0.0;
    double r_cov_std = 0.0;
    double r_exp_std = 0.0;
    double r_norm = 0.0;
};

// Standardizes across the whole training step and combines: the semantic
// term over all samples pooled (or per identity batch when configured), the
// batch-level terms across the step's identity batches, broadcast back.
// Returns one breakdown list per input batch, index-aligned.
std::vector<std::vector<RewardBreakdown>> finalize_step(
    const std::vector<IdentityBatchScore>& scores, const RewardWeights& w);

// Single-batch convenience: score + finalize in one call.
std::vector<RewardBreakdown> compute_batch(const std::vector<Vec>& gen_feats, std::size_t y,
                                           const MemoryBank& bank, const RewardWeights& w);

std::vector<std::string> reward_csv_header();
std::vector<std::string> reward_csv_row(std::size_t step, std::size_t y, std::size_t sample_idx,
                                        const RewardBreakdown& bd);

} // namespace idforge
