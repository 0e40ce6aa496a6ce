#pragma once

#include <optional>

#include "sac/model.hpp"

namespace sac {

// Running-average reward baseline. Kept as (sum, count) so the mean is the
// exact arithmetic mean of everything observed so far.
struct BaselineState {
    double sum = 0.0;
    std::int64_t count = 0;
    double value() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }
    void observe(double reward) {
        sum += reward;
        ++count;
    }
};

struct RewardRecord {
    std::int64_t example_id = 0;
    double reward = 0.0;
    double baseline_before = 0.0;
    double advantage = 0.0;
    std::int64_t action_count = 0;
};

// Task reward: mean gold log-probability, detached from the tape.
// Throws on a row/gold length mismatch.
double compute_reward(const Tensor& logits, const std::vector<std::int64_t>& gold);

// Builds the policy-loss term  -(R - b) * sum(log p)  on the tape of
// total_log_prob, then updates the baseline with R (update-after-use).
Tensor reinforce_step(Tape& tp, const Tensor& total_log_prob, double reward, BaselineState& baseline,
                      RewardRecord* record = nullptr);

struct StepMetrics {
    std::int64_t step = 0;
    double loss = 0.0;
    double metric = 0.0;  // task metric on the training batch
    double mean_reward = 0.0;
    double baseline = 0.0;
    std::int64_t score_evals = 0;
    std::int64_t peak_act = 0;
    double wall_ms = 0.0;
};

struct EvalMetrics {
    std::string split = "test";
    double metric = 0.0;        // accuracy (pointer/graph) or BPC (char lm)
    double mean_logprob = 0.0;  // mean gold log-probability
    double edge_logprob = 0.0;  // mean beam-decode log-prob (predictor models)
    std::int64_t examples = 0;
    std::int64_t score_evals = 0;
};

class JointTrainer {
  public:
    JointTrainer(SacModel& model, const RunConfig& cfg);

    // One optimizer step for Phi and (when present) Theta over the batch.
    StepMetrics train_step(const std::vector<Example>& batch, std::int64_t step_index);
    StepMetrics train_step_graph(const GraphTask& graph, std::int64_t step_index);

    EvalMetrics evaluate(const std::vector<Example>& examples, std::optional<EdgeSource> source_override = {});
    EvalMetrics evaluate_graph(const GraphTask& graph, const std::vector<std::int64_t>& mask,
                               std::optional<EdgeSource> source_override = {});

    BaselineState& baseline() { return baseline_; }
    const std::vector<RewardRecord>& last_records() const { return records_; }

  private:
    struct ExampleResult {
        double nll = 0.0;
        double reward = 0.0;
        bool correct = false;
    };
    ExampleResult run_example(Tape& tp, const Example& ex, std::int64_t example_id, Tensor& loss_out);

    SacModel& model_;
    RunConfig cfg_;
    BaselineState baseline_;
    std::vector<RewardRecord> records_;
    double reward_sq_sum_ = 0.0;  // for the optional reward normalization
};

// Task metric helpers.
std::int64_t argmax_row(const Tensor& logits, std::int64_t row);
bool argmax_correct(const Tensor& logits_row, std::int64_t gold);
double bits_per_char(double mean_logprob_nats);

}  // namespace sac
