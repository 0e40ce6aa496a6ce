#include "sac/trainer.hpp"

#include <chrono>
#include <cmath>

namespace sac {

double compute_reward(const Tensor& logits, const std::vector<std::int64_t>& gold) {
    return ops::mean_gold_logprob(logits, gold);
}

Tensor reinforce_step(Tape& tp, const Tensor& total_log_prob, double reward, BaselineState& baseline,
                      RewardRecord* record) {
    if (!std::isfinite(reward)) throw NumericError("reinforce_step: non-finite reward");
    const double b = baseline.value();
    const double advantage = reward - b;
    if (record) {
        record->reward = reward;
        record->baseline_before = b;
        record->advantage = advantage;
    }
    Tensor loss = ops::scale(tp, total_log_prob, -advantage);
    baseline.observe(reward);  // update after use: a reward never shrinks its own advantage
    return loss;
}

std::int64_t argmax_row(const Tensor& logits, std::int64_t row) {
    const std::int64_t v = logits->cols();
    const double* p = &logits->values[row * v];
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < v; ++j) {
        if (p[j] > p[best]) best = j;
    }
    return best;
}

bool argmax_correct(const Tensor& logits_row, std::int64_t gold) { return argmax_row(logits_row, 0) == gold; }

double bits_per_char(double mean_logprob_nats) { return -mean_logprob_nats / std::log(2.0); }

JointTrainer::JointTrainer(SacModel& model, const RunConfig& cfg) : model_(model), cfg_(cfg) {}

JointTrainer::ExampleResult JointTrainer::run_example(Tape& tp, const Example& ex, std::int64_t example_id,
                                                      Tensor& loss_out) {
    Rng sample_rng(cfg_.seed ^ 0x5AC5AC5ACULL, static_cast<std::uint64_t>(example_id));
    Rng* rng_ptr = model_.has_predictor() ? &sample_rng : nullptr;
    // frozen random-edge baselines draw a fresh seeded set per example
    const std::uint64_t edge_seed = Rng::splitmix(cfg_.seed ^ (0xED6E5EEDULL + static_cast<std::uint64_t>(example_id)));
    ModelOutput out = model_.forward_seq(tp, ex.tokens, rng_ptr, cfg_.beam, {}, edge_seed);
    ops::check_finite(out.logits, "task logits");

    Tensor nll = ops::cross_entropy_label_smoothing(tp, out.logits, ex.targets, cfg_.label_smoothing);
    const double reward = compute_reward(out.logits, ex.targets);
    Tensor loss = nll;
    if (out.sampled) {
        RewardRecord rec;
        rec.example_id = example_id;
        rec.action_count = static_cast<std::int64_t>(out.sample.action_log_probs.size());
        Tensor policy = reinforce_step(tp, out.sample.total_log_prob, reward, baseline_, &rec);
        if (cfg_.reward_norm) {
            reward_sq_sum_ += reward * reward;
            const double var = reward_sq_sum_ / static_cast<double>(baseline_.count) -
                               baseline_.value() * baseline_.value();
            const double sd = std::sqrt(std::max(var, 0.0));
            if (sd > 1e-8) policy = ops::scale(tp, policy, 1.0 / sd);
        }
        if (cfg_.entropy_reg != 0.0 && out.sample.entropy_sum) {
            policy = ops::add(tp, policy, ops::scale(tp, out.sample.entropy_sum, -cfg_.entropy_reg));
        }
        records_.push_back(rec);
        loss = ops::add(tp, loss, policy);
    }
    loss_out = loss;

    ExampleResult r;
    r.nll = nll->values[0];
    r.reward = reward;
    if (cfg_.task == "pointer") r.correct = argmax_correct(out.logits, ex.targets[0]);
    return r;
}

StepMetrics JointTrainer::train_step(const std::vector<Example>& batch, std::int64_t step_index) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::int64_t live0 = alloc_stats().live;
    alloc_stats().reset_peak();
    const std::int64_t score0 = attn_stats().score_evals;
    records_.clear();

    StepMetrics m;
    m.step = step_index;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    std::int64_t correct = 0;
    double reward_sum = 0.0, logprob_sum = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Tape tape;
        Tensor loss;
        const std::int64_t example_id = step_index * static_cast<std::int64_t>(batch.size()) + static_cast<std::int64_t>(i);
        ExampleResult r = run_example(tape, batch[i], example_id, loss);
        tape.backward(ops::scale(tape, loss, inv_b));
        m.loss += r.nll * inv_b;
        reward_sum += r.reward;
        logprob_sum += r.reward;
        correct += r.correct ? 1 : 0;
    }
    m.mean_reward = reward_sum * inv_b;
    m.baseline = baseline_.value();
    if (cfg_.task == "pointer") {
        m.metric = static_cast<double>(correct) * inv_b;
    } else {
        m.metric = bits_per_char(logprob_sum * inv_b);
    }

    if (model_.has_predictor()) {
        bool all_zero_advantage = !records_.empty();
        for (const auto& rec : records_) all_zero_advantage = all_zero_advantage && rec.advantage == 0.0;
        if (all_zero_advantage && cfg_.entropy_reg == 0.0) {
            model_.theta().zero_grads();  // zero advantage: the predictor must not move
        } else {
            if (cfg_.clip_theta > 0.0) model_.theta().clip_global_norm(cfg_.clip_theta);
            model_.theta().adam_step(cfg_.lr_theta, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
        }
    }
    model_.phi().adam_step(cfg_.lr_phi, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);

    m.score_evals = attn_stats().score_evals - score0;
    m.peak_act = alloc_stats().peak - live0;
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(m.loss)) throw NumericError("training loss became non-finite");
    return m;
}

StepMetrics JointTrainer::train_step_graph(const GraphTask& graph, std::int64_t step_index) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::int64_t live0 = alloc_stats().live;
    alloc_stats().reset_peak();
    const std::int64_t score0 = attn_stats().score_evals;
    records_.clear();

    Tape tape;
    Rng sample_rng(cfg_.seed ^ 0x5AC5AC5ACULL, static_cast<std::uint64_t>(step_index));
    Rng* rng_ptr = model_.has_predictor() ? &sample_rng : nullptr;
    const std::uint64_t edge_seed = Rng::splitmix(cfg_.seed ^ (0xED6E5EEDULL + static_cast<std::uint64_t>(step_index)));
    ModelOutput out = model_.forward_graph(tape, graph, rng_ptr, cfg_.beam, {}, edge_seed);
    ops::check_finite(out.logits, "task logits");

    // loss over the labeled training nodes only
    Tensor train_logits = ops::embedding_lookup(tape, out.logits, graph.train_mask);
    std::vector<std::int64_t> gold;
    for (auto i : graph.train_mask) gold.push_back(graph.labels[i]);
    Tensor nll = ops::cross_entropy_label_smoothing(tape, train_logits, gold, cfg_.label_smoothing);
    const double reward = compute_reward(train_logits, gold);

    Tensor loss = nll;
    if (out.sampled) {
        RewardRecord rec;
        rec.example_id = step_index;
        rec.action_count = static_cast<std::int64_t>(out.sample.action_log_probs.size());
        Tensor policy = reinforce_step(tape, out.sample.total_log_prob, reward, baseline_, &rec);
        records_.push_back(rec);
        loss = ops::add(tape, loss, policy);
    }
    tape.backward(loss);

    StepMetrics m;
    m.step = step_index;
    m.loss = nll->values[0];
    m.mean_reward = reward;
    m.baseline = baseline_.value();
    std::int64_t correct = 0;
    for (std::size_t r = 0; r < graph.train_mask.size(); ++r) {
        correct += argmax_row(train_logits, static_cast<std::int64_t>(r)) == gold[r] ? 1 : 0;
    }
    m.metric = static_cast<double>(correct) / static_cast<double>(gold.size());

    if (model_.has_predictor()) {
        const bool zero_adv = !records_.empty() && records_.front().advantage == 0.0;
        if (zero_adv && cfg_.entropy_reg == 0.0) {
            model_.theta().zero_grads();
        } else {
            if (cfg_.clip_theta > 0.0) model_.theta().clip_global_norm(cfg_.clip_theta);
            model_.theta().adam_step(cfg_.lr_theta, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
        }
    }
    model_.phi().adam_step(cfg_.lr_phi, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);

    m.score_evals = attn_stats().score_evals - score0;
    m.peak_act = alloc_stats().peak - live0;
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(m.loss)) throw NumericError("training loss became non-finite");
    return m;
}

EvalMetrics JointTrainer::evaluate(const std::vector<Example>& examples, std::optional<EdgeSource> source_override) {
    EvalMetrics m;
    const std::int64_t score0 = attn_stats().score_evals;
    std::int64_t correct = 0;
    double logprob_sum = 0.0, edge_lp_sum = 0.0;
    for (const Example& ex : examples) {
        Tape notape(false);
        ModelOutput out = model_.forward_seq(notape, ex.tokens, nullptr, cfg_.beam, source_override, cfg_.seed);
        logprob_sum += compute_reward(out.logits, ex.targets);
        edge_lp_sum += out.decode_log_prob;
        if (cfg_.task == "pointer") correct += argmax_correct(out.logits, ex.targets[0]) ? 1 : 0;
    }
    m.examples = static_cast<std::int64_t>(examples.size());
    m.mean_logprob = logprob_sum / static_cast<double>(m.examples);
    m.edge_logprob = edge_lp_sum / static_cast<double>(m.examples);
    m.metric = cfg_.task == "pointer" ? static_cast<double>(correct) / static_cast<double>(m.examples)
                                      : bits_per_char(m.mean_logprob);
    m.score_evals = attn_stats().score_evals - score0;
    return m;
}

EvalMetrics JointTrainer::evaluate_graph(const GraphTask& graph, const std::vector<std::int64_t>& mask,
                                         std::optional<EdgeSource> source_override) {
    EvalMetrics m;
    const std::int64_t score0 = attn_stats().score_evals;
    Tape notape(false);
    ModelOutput out = model_.forward_graph(notape, graph, nullptr, cfg_.beam, source_override, cfg_.seed);
    Tensor sel = ops::embedding_lookup(notape, out.logits, mask);
    std::vector<std::int64_t> gold;
    for (auto i : mask) gold.push_back(graph.labels[i]);
    std::int64_t correct = 0;
    for (std::size_t r = 0; r < mask.size(); ++r) {
        correct += argmax_row(sel, static_cast<std::int64_t>(r)) == gold[r] ? 1 : 0;
    }
    m.examples = static_cast<std::int64_t>(mask.size());
    m.mean_logprob = compute_reward(sel, gold);
    m.edge_logprob = out.decode_log_prob;
    m.metric = static_cast<double>(correct) / static_cast<double>(mask.size());
    m.score_evals = attn_stats().score_evals - score0;
    return m;
}

}  // namespace sac
