#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "sac/bench.hpp"
#include "sac/checkpoint.hpp"
#include "sac/metrics.hpp"
#include "sac/model.hpp"
#include "sac/selftest.hpp"
#include "sac/tasks.hpp"
#include "sac/trainer.hpp"

namespace fs = std::filesystem;
using namespace sac;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::string checkpoint_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

RunConfig load_run_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_config_file(args.config_path);
    apply_overrides(cfg, args.overrides);
    if (args.seed_given) cfg.seed = args.seed;
    cfg.validate();
    return cfg;
}

struct TaskBundle {
    RunConfig cfg;
    std::unique_ptr<PointerTask> pointer;
    std::unique_ptr<CharLmTask> char_lm;
    std::unique_ptr<GraphTask> graph;
    std::unique_ptr<SacModel> model;
};

TaskBundle build_bundle(const RunConfig& cfg) {
    TaskBundle b;
    b.cfg = cfg;
    if (cfg.task == "pointer") {
        b.pointer = std::make_unique<PointerTask>(cfg.n, cfg.vocab, cfg.seed);
        b.model = std::make_unique<SacModel>(cfg);
    } else if (cfg.task == "char_lm") {
        RunConfig c = cfg;
        c.vocab = 256;
        if (!cfg.corpus.empty()) {
            b.char_lm = std::make_unique<CharLmTask>(CharLmTask::load(cfg.corpus, cfg.n));
        } else if (cfg.synth_corpus_bytes > 0) {
            b.char_lm = std::make_unique<CharLmTask>(CharLmTask(synthetic_corpus(cfg.synth_corpus_bytes, cfg.seed), cfg.n));
        } else {
            throw ConfigError("char_lm task needs task.corpus or task.synth_corpus_bytes");
        }
        b.cfg = c;
        b.model = std::make_unique<SacModel>(c);
    } else {
        b.graph = std::make_unique<GraphTask>(load_graph_file(cfg.graph_file));
        RunConfig c = cfg;
        c.n = b.graph->n;
        b.cfg = c;
        b.model = std::make_unique<SacModel>(c, b.graph.get());
    }
    return b;
}

std::vector<Example> eval_examples_for(const TaskBundle& b) {
    if (b.pointer) return b.pointer->eval_set(b.cfg.eval_examples);
    if (b.char_lm) return b.char_lm->eval_windows(b.cfg.eval_examples);
    return {};
}

void write_summary(const fs::path& dir, const RunConfig& cfg, const std::string& body) {
    std::ofstream f(dir / "summary.txt");
    f << body << "\n--- config ---\n" << cfg.canonical();
}

void dump_decoded_edges(TaskBundle& b, const fs::path& out) {
    if (b.cfg.edge_source == EdgeSource::dense) return;  // dense mode has no edge set
    Tape notape(false);
    ModelOutput mo;
    if (b.graph) {
        mo = b.model->forward_graph(notape, *b.graph, nullptr, b.cfg.beam);
    } else {
        const Example ex = b.pointer ? b.pointer->eval_set(1).front() : b.char_lm->eval_windows(1).front();
        mo = b.model->forward_seq(notape, ex.tokens, nullptr, b.cfg.beam, {}, b.cfg.seed);
    }
    save_edges_file(mo.edges, out.string());
}

int cmd_train(const CommonArgs& args) {
    RunConfig cfg = load_run_config(args);
    TaskBundle b = build_bundle(cfg);
    cfg = b.cfg;
    fs::create_directories(args.out_dir);
    const fs::path out(args.out_dir);
    std::ofstream metrics(out / "metrics.jsonl");
    JointTrainer trainer(*b.model, cfg);

    bool target_reached = false;
    double final_eval = 0.0;
    std::int64_t steps_run = 0;
    const std::int64_t total = b.graph && cfg.epochs > 0 ? cfg.epochs : cfg.steps;
    std::vector<Example> eval_set = eval_examples_for(b);
    for (std::int64_t step = 0; step < total && !target_reached; ++step) {
        StepMetrics m;
        if (b.graph) {
            m = trainer.train_step_graph(*b.graph, step);
        } else {
            const auto batch = b.pointer ? b.pointer->train_batch(step, cfg.batch)
                                         : b.char_lm->train_batch(step, cfg.seed, cfg.batch);
            m = trainer.train_step(batch, step);
        }
        metrics << metrics_line(m) << "\n";
        steps_run = step + 1;
        const bool do_eval = cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0;
        if (do_eval) {
            EvalMetrics em;
            if (b.graph) {
                em = trainer.evaluate_graph(*b.graph, b.graph->valid_mask);
            } else {
                em = trainer.evaluate(eval_set);
            }
            em.split = "valid";
            metrics << metrics_line(em) << "\n";
            metrics.flush();
            std::cerr << "step " << (step + 1) << " loss " << m.loss << " valid metric " << em.metric << "\n";
            if (cfg.target_metric != 0.0) {
                target_reached = cfg.task == "char_lm" ? em.metric <= cfg.target_metric : em.metric >= cfg.target_metric;
            }
        }
    }

    EvalMetrics final;
    if (b.graph) {
        final = trainer.evaluate_graph(*b.graph, b.graph->test_mask);
    } else {
        final = trainer.evaluate(eval_set);
    }
    final.split = "test";
    metrics << metrics_line(final) << "\n";
    final_eval = final.metric;

    save_checkpoint((out / "checkpoint.bin").string(),
                    {{"phi", &b.model->phi()}, {"theta", &b.model->theta()}});
    dump_decoded_edges(b, out / "edges.tsv");
    std::ostringstream sum;
    sum << "task=" << cfg.task << "\nsteps_run=" << steps_run << "\nfinal_test_metric=" << final_eval
        << "\ntarget_reached=" << (target_reached ? 1 : 0);
    write_summary(out, cfg, sum.str());
    std::cout << metrics_line(final) << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    RunConfig cfg = load_run_config(args);
    TaskBundle b = build_bundle(cfg);
    cfg = b.cfg;
    const fs::path out(args.out_dir);
    fs::create_directories(out);
    const std::string ckpt = args.checkpoint_path.empty() ? (out / "checkpoint.bin").string() : args.checkpoint_path;
    if (fs::exists(ckpt)) {
        load_checkpoint(ckpt, {{"phi", &b.model->phi()}, {"theta", &b.model->theta()}});
    }
    JointTrainer trainer(*b.model, cfg);
    EvalMetrics em;
    if (b.graph) {
        em = trainer.evaluate_graph(*b.graph, b.graph->test_mask);
    } else {
        em = trainer.evaluate(eval_examples_for(b));
    }
    em.split = "test";
    std::ofstream metrics(out / "eval_metrics.jsonl");
    metrics << metrics_line(em) << "\n";
    std::ostringstream sum;
    sum << "task=" << cfg.task << "\nfinal_test_metric=" << em.metric;
    write_summary(out, cfg, sum.str());
    std::cout << metrics_line(em) << "\n";
    return 0;
}

int cmd_edges(const CommonArgs& args) {
    RunConfig cfg = load_run_config(args);
    TaskBundle b = build_bundle(cfg);
    const fs::path out(args.out_dir);
    fs::create_directories(out);
    if (!args.checkpoint_path.empty()) {
        load_checkpoint(args.checkpoint_path, {{"phi", &b.model->phi()}, {"theta", &b.model->theta()}});
    }
    dump_decoded_edges(b, out / "edges.tsv");
    std::cout << "edges written to " << (out / "edges.tsv").string() << "\n";
    return 0;
}

int cmd_bench(const CommonArgs& args, const std::string& n_list_str) {
    RunConfig cfg = load_run_config(args);
    std::vector<std::int64_t> ns;
    std::stringstream ss(n_list_str);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) ns.push_back(std::stoll(item));
    }
    BenchReport report = bench_scaling(cfg, ns);
    fs::create_directories(args.out_dir);
    std::ofstream f(fs::path(args.out_dir) / "bench.txt");
    f << report.table();
    std::cout << report.table();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse adaptive connection engine"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string n_list = "64,128,256,512";

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", args.config_path, "config file (key=value with [sections])");
        cmd->add_option("--out", args.out_dir, "output directory");
        cmd->add_option("--override", args.overrides, "config override section.key=value")->take_all();
        cmd->add_option("--checkpoint", args.checkpoint_path, "checkpoint path");
        cmd->add_option_function<std::uint64_t>(
            "--seed",
            [&](std::uint64_t s) {
                args.seed = s;
                args.seed_given = true;
            },
            "seed override");
    };

    CLI::App* train = app.add_subcommand("train", "train a model");
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    CLI::App* edges = app.add_subcommand("edges", "decode and dump an edge set");
    CLI::App* bench = app.add_subcommand("bench", "complexity scaling report");
    CLI::App* selftest_cmd = app.add_subcommand("selftest", "run the built-in oracle suite");
    for (CLI::App* cmd : {train, eval, edges, bench}) add_common(cmd);
    bench->add_option("--n-list", n_list, "comma-separated sizes");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(args);
        if (eval->parsed()) return cmd_eval(args);
        if (edges->parsed()) return cmd_edges(args);
        if (bench->parsed()) return cmd_bench(args, n_list);
        if (selftest_cmd->parsed()) return sac::selftest(std::cout) ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
