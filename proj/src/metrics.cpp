#include "sac/metrics.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace sac {

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string metrics_line(const StepMetrics& m) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "{\"kind\":\"train\",\"step\":%" PRId64
                  ",\"loss\":%s,\"metric\":%s,\"mean_reward\":%s,\"baseline\":%s,"
                  "\"score_evals\":%" PRId64 ",\"peak_act\":%" PRId64 ",\"wall_ms\":%s}",
                  m.step, num(m.loss).c_str(), num(m.metric).c_str(), num(m.mean_reward).c_str(),
                  num(m.baseline).c_str(), m.score_evals, m.peak_act, num(m.wall_ms).c_str());
    return buf;
}

std::string metrics_line(const EvalMetrics& m) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "{\"kind\":\"eval\",\"split\":\"%s\",\"metric\":%s,\"mean_logprob\":%s,\"edge_logprob\":%s,"
                  "\"examples\":%" PRId64 ",\"score_evals\":%" PRId64 "}",
                  m.split.c_str(), num(m.metric).c_str(), num(m.mean_logprob).c_str(), num(m.edge_logprob).c_str(),
                  m.examples, m.score_evals);
    return buf;
}

bool validate_metrics_line(const std::string& line, std::string* err) {
    auto fail = [&](const std::string& msg) {
        if (err) *err = msg;
        return false;
    };
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return fail("not a JSON object");
    if (!j.contains("kind") || !j["kind"].is_string()) return fail("missing kind");
    const std::string kind = j["kind"];
    auto need_num = [&](const char* key) {
        return j.contains(key) && j[key].is_number() && std::isfinite(j[key].get<double>());
    };
    auto need_int = [&](const char* key) { return j.contains(key) && j[key].is_number_integer(); };
    if (kind == "train") {
        for (const char* k : {"loss", "metric", "mean_reward", "baseline", "wall_ms"}) {
            if (!need_num(k)) return fail(std::string("bad field: ") + k);
        }
        for (const char* k : {"step", "score_evals", "peak_act"}) {
            if (!need_int(k)) return fail(std::string("bad field: ") + k);
        }
        if (j["step"].get<std::int64_t>() < 0) return fail("negative step");
        return true;
    }
    if (kind == "eval") {
        if (!j.contains("split") || !j["split"].is_string()) return fail("missing split");
        for (const char* k : {"metric", "mean_logprob", "edge_logprob"}) {
            if (!need_num(k)) return fail(std::string("bad field: ") + k);
        }
        for (const char* k : {"examples", "score_evals"}) {
            if (!need_int(k)) return fail(std::string("bad field: ") + k);
        }
        return true;
    }
    return fail("unknown kind: " + kind);
}

std::string strip_wall_ms(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return line;
    j.erase("wall_ms");
    return j.dump();
}

}  // namespace sac
