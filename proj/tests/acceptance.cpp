// Acceptance run: prints one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <iostream>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "hcan/checkpoint.hpp"
#include "hcan/cli.hpp"
#include "hcan/data_io.hpp"
#include "hcan/errors.hpp"
#include "oracle.hpp"

using namespace hcan;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

fs::path g_work;
const fs::path g_source = HCAN_SOURCE_DIR;

struct Verdict {
    bool pass;
    std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int hcan_run(std::vector<std::string> args, std::string* out = nullptr) {
    args.insert(args.begin(), "hcan");
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str();
    if (code != 0) std::cerr << e.str();
    return code;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

// Mechanism/ablation/rounds cycle for the seeded forward suites.
fixtures::Instance suite_instance(std::uint64_t i) {
    static const std::array<std::pair<Mechanism, std::size_t>, 4> mechs{
        {{Mechanism::parallel, 1}, {Mechanism::maxout, 1}, {Mechanism::alternating, 1}, {Mechanism::alternating, 2}}};
    const auto [m, r] = mechs[i % 4];
    return fixtures::random_instance(1000 + i, m, kAblations[(i / 4) % kAblations.size()], r);
}

// ---- 1 ------------------------------------------------------------------------------

Verdict gradient_integrity() {
    const auto t0 = Clock::now();
    std::string out;
    const int code = hcan_run({"gradcheck", "--out", (g_work / "gradcheck.json").string()}, &out);
    const double secs = seconds_since(t0);
    const json r = json::parse(slurp(g_work / "gradcheck.json"));
    double worst = 0;
    std::size_t tensors = 0;
    std::set<std::string> covered;
    for (const auto& v : r["variants"]) {
        covered.insert(v["mechanism"].get<std::string>() + "/" + std::to_string(v["rounds"].get<int>()) + "/" +
                       v["ablation"].get<std::string>());
        for (const auto& t : v["tensors"]) {
            tensors++;
            worst = t["max_relative_error"].is_number() ? std::max(worst, t["max_relative_error"].get<double>()) : 1e9;
        }
    }
    const bool pass = code == 0 && r["passed"] == true && worst < 1e-4 && covered.size() == 28 && secs < 120;
    return {pass, std::to_string(r["variants"].size()) + " variants, " + std::to_string(tensors) +
                      " tensor checks, max rel err " + fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

// ---- 2 and 3 ----------------------------------------------------------------------------

struct SuiteStats {
    double worst_sum = 0, worst_masked = 0, worst_negative = 0, worst_probs = 0, worst_convex = 0;
};

const SuiteStats& forward_suite() {
    static std::optional<SuiteStats> cached;
    if (cached) return *cached;
    SuiteStats s;
    auto check_map = [&](const Tensor& a, const Mask& mask) {
        double sum = 0;
        for (std::size_t i = 0; i < a.size(); i++) {
            sum += a[i];
            s.worst_negative = std::max(s.worst_negative, -a[i]);
            if (!mask[i]) s.worst_masked = std::max(s.worst_masked, std::abs(a[i]));
        }
        s.worst_sum = std::max(s.worst_sum, std::abs(sum - 1.0));
    };
    auto outside = [](double v, double lo, double hi) { return std::max({0.0, lo - v, v - hi}); };
    for (std::uint64_t i = 0; i < 1000; i++) {
        auto x = suite_instance(i);
        Graph g;
        ParamVars pv(g, x.params);
        auto out = forward(g, pv, x.config, x.tokens, x.grid, Mode::eval);
        const Tensor& V = x.grid.features;
        const std::array<Var, 3> qs{out.question.word, out.question.phrase, out.question.sentence};
        for (std::size_t l = 0; l < 3; l++) {
            const auto& lv = out.levels[l];
            check_map(lv.a_v.value(), Mask(x.config.locations, true));
            check_map(lv.a_q.value(), x.tokens.mask);
            const Tensor& Q = qs[l].value();
            for (std::size_t r = 0; r < x.config.d; r++) {
                double lo = INFINITY, hi = -INFINITY;
                for (std::size_t n = 0; n < V.cols(); n++) lo = std::min(lo, V(r, n)), hi = std::max(hi, V(r, n));
                s.worst_convex = std::max(s.worst_convex, outside(lv.v_hat.value()[r], lo, hi));
                lo = INFINITY, hi = -INFINITY;
                for (std::size_t t = 0; t < Q.cols(); t++)
                    if (x.tokens.mask[t]) lo = std::min(lo, Q(r, t)), hi = std::max(hi, Q(r, t));
                s.worst_convex = std::max(s.worst_convex, outside(lv.q_hat.value()[r], lo, hi));
            }
        }
        double psum = 0;
        for (double p : out.answer.probs.value().data()) psum += p;
        s.worst_probs = std::max(s.worst_probs, std::abs(psum - 1.0));
    }
    cached = s;
    return *cached;
}

Verdict normalization() {
    const auto& s = forward_suite();
    const bool pass = s.worst_sum <= 1e-9 && s.worst_masked == 0.0 && s.worst_negative <= 0.0 && s.worst_probs <= 1e-9;
    return {pass, "1000 forwards, max |sum-1| maps " + fmt(s.worst_sum) + ", probs " + fmt(s.worst_probs) +
                      ", max masked weight " + fmt(s.worst_masked) + ", most negative weight " + fmt(s.worst_negative == 0.0 ? 0.0 : -s.worst_negative)};
}

Verdict convexity() {
    const auto& s = forward_suite();
    return {s.worst_convex <= 1e-12, "1000 forwards, max excursion outside column range " + fmt(s.worst_convex)};
}

// ---- 4 ------------------------------------------------------------------------------------

Verdict permutation() {
    double worst_map = 0, worst_logit = 0;
    for (std::uint64_t i = 0; i < 100; i++) {
        auto x = suite_instance(7 * i + 3);
        Rng rng(i);
        std::vector<std::size_t> perm(x.config.locations);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        Tensor moved(x.grid.features.shape());
        for (std::size_t r = 0; r < x.config.d; r++)
            for (std::size_t n = 0; n < perm.size(); n++) moved(r, n) = x.grid.features(r, perm[n]);

        Graph g;
        ParamVars pv(g, x.params);
        auto a = forward(g, pv, x.config, x.tokens, x.grid, Mode::eval);
        auto b = forward(g, pv, x.config, x.tokens, FeatureGrid(moved), Mode::eval);
        for (std::size_t l = 0; l < 3; l++)
            for (std::size_t n = 0; n < perm.size(); n++)
                worst_map = std::max(worst_map, std::abs(b.levels[l].a_v.value()[n] - a.levels[l].a_v.value()[perm[n]]));
        worst_logit = std::max(worst_logit, max_abs_diff(a.answer.logits.value(), b.answer.logits.value()));
    }
    return {worst_map < 1e-9 && worst_logit < 1e-9,
            "100 instances, max a_v mismatch " + fmt(worst_map) + ", max logit change " + fmt(worst_logit)};
}

// ---- 5 ------------------------------------------------------------------------------------

Verdict oracle_equivalence() {
    double worst = 0;
    auto cmp = [&](const Tensor& t, const oracle::Vec& v) {
        for (std::size_t i = 0; i < v.size(); i++) worst = std::max(worst, std::abs(t[i] - v[i]));
    };
    for (std::uint64_t i = 0; i < 50; i++) {
        auto x = suite_instance(5000 + i);
        Graph g;
        ParamVars pv(g, x.params);
        auto out = forward(g, pv, x.config, x.tokens, x.grid, Mode::eval);
        auto ref = oracle::forward(x.params, x.config, x.tokens, x.grid);
        const std::array<std::pair<Var, const oracle::Cols*>, 3> qs{
            {{out.question.word, &ref.word}, {out.question.phrase, &ref.phrase}, {out.question.sentence, &ref.sentence}}};
        for (std::size_t l = 0; l < 3; l++) {
            const Tensor& Q = qs[l].first.value();
            for (std::size_t t = 0; t < Q.cols(); t++)
                for (std::size_t r = 0; r < Q.rows(); r++) worst = std::max(worst, std::abs(Q(r, t) - (*qs[l].second)[t][r]));
            cmp(out.levels[l].a_v.value(), ref.levels[l].a_v);
            cmp(out.levels[l].a_q.value(), ref.levels[l].a_q);
            cmp(out.levels[l].v_hat.value(), ref.levels[l].v_hat);
            cmp(out.levels[l].q_hat.value(), ref.levels[l].q_hat);
        }
        cmp(out.answer.logits.value(), ref.logits);
        cmp(out.answer.probs.value(), ref.probs);
    }
    return {worst < 1e-12, "50 instances, max abs diff " + fmt(worst)};
}

// ---- 6 ------------------------------------------------------------------------------------

void ensure_synthetic() {
    if (fs::exists(g_work / "data" / "val.jsonl")) return;
    if (hcan_run({"synth", "--n", "500", "--grid", "2x2", "--d", "32", "--seed", "7", "--out",
                  (g_work / "data").string()}) != 0)
        throw std::runtime_error("synth failed");
}

Verdict learning() {
    ensure_synthetic();
    // the shipped configs name data/train.jsonl relative to the working directory
    const fs::path previous = fs::current_path();
    fs::current_path(g_work);
    bool pass = true;
    std::string detail;
    for (const char* mech : {"parallel", "alternating"}) {
        const auto t0 = Clock::now();
        const auto cfg = g_source / "configs" / (std::string("synthetic_") + mech + ".json");
        std::string out;
        const int code = hcan_run({"train", "--config", cfg.string(), "--out", (g_work / "runs" / mech).string()}, &out);
        const double secs = seconds_since(t0);
        double best_train = 0, best_val = 0;
        std::size_t hit = 0, epochs = 0;
        std::ifstream log(g_work / "runs" / mech / "train_log.jsonl");
        for (std::string line; std::getline(log, line);) {
            auto j = json::parse(line);
            const double tr = j["train_accuracy"], va = j["val_accuracy"];
            epochs = j["epoch"];
            best_train = std::max(best_train, tr);
            best_val = std::max(best_val, va);
            if (!hit && tr >= 0.99 && va >= 0.90) hit = epochs;
        }
        const bool ok = code == 0 && hit > 0 && hit <= 200 && secs < 300;
        pass = pass && ok;
        detail += std::string(detail.empty() ? "" : "; ") + mech + ": " +
                  (ok ? "met at epoch " + std::to_string(hit) : std::string("not met")) + ", stopped after " + std::to_string(epochs) + " epochs, best train " +
                  fmt(best_train) + ", best val " + fmt(best_val) + ", " + fmt(secs) + " s";
    }
    fs::current_path(previous);
    return {pass, detail};
}

// ---- 7 ------------------------------------------------------------------------------------

Verdict ablation_harness() {
    ensure_synthetic();
    json cfg = json::parse(slurp(g_source / "configs" / "synthetic_parallel.json"));
    cfg["train"]["max_epochs"] = 3;
    cfg["data"] = {{"train", (g_work / "data" / "train.jsonl").string()}, {"val", (g_work / "data" / "val.jsonl").string()}};
    cfg["out"] = (g_work / "ablate").string();
    std::ofstream(g_work / "ablate.json") << cfg.dump(2);
    std::string out;
    const int code = hcan_run({"ablate", "--config", (g_work / "ablate.json").string()}, &out);
    if (code != 0) return {false, "ablate exited with " + std::to_string(code)};
    const json table = json::parse(slurp(g_work / "ablate" / "ablation.json"));
    std::set<std::string> names;
    bool shaped = table["rows"].size() == 7;
    std::string row_text;
    for (const auto& r : table["rows"]) {
        names.insert(r["variant"].get<std::string>());
        const double v = r["best_val_accuracy"], t = r["final_train_accuracy"];
        const std::size_t e = r["epochs"];
        shaped = shaped && v >= 0 && v <= 1 && t >= 0 && t <= 1 && e >= 1 && e <= 3 &&
                 fs::exists(g_work / "ablate" / r["variant"].get<std::string>() / "checkpoint_last.hcan");
        row_text += " " + r["variant"].get<std::string>() + "=" + fmt(v);
    }
    std::set<std::string> expected;
    for (auto a : kAblations) expected.insert(to_string(a));
    return {shaped && names == expected, "7 rows, 3-epoch budget, best val:" + row_text};
}

// ---- 8 ------------------------------------------------------------------------------------

template <typename E, typename Fn>
bool raises(Fn fn, const char* needle) {
    try {
        fn();
    } catch (const E& e) {
        return std::strstr(e.what(), needle) != nullptr;
    } catch (...) {
        return false;
    }
    return false;
}

Verdict format_durability() {
    const fs::path dir = g_work / "formats";
    fs::create_directories(dir);
    std::vector<std::string> failed;
    auto expect = [&](bool ok, const char* what) {
        if (!ok) failed.push_back(what);
    };

    auto x = fixtures::random_instance(42, Mechanism::alternating, Ablation::none, 2);
    Checkpoint ck;
    ck.config = {{"model", to_json(x.config)}};
    ck.tensors = x.params;
    save_checkpoint(dir / "a.hcan", ck);
    const Checkpoint back = load_checkpoint(dir / "a.hcan");
    bool exact = back.config == ck.config && back.tensors.size() == ck.tensors.size();
    for (std::size_t i = 0; exact && i < ck.tensors.size(); i++) {
        const auto& a = ck.tensors[i].value;
        const auto& b = back.tensors[i].value;
        exact = ck.tensors[i].name == back.tensors[i].name && a.shape() == b.shape() &&
                std::memcmp(a.data().data(), b.data().data(), a.size() * 8) == 0;
    }
    expect(exact, "checkpoint bit-exact");
    expect(model_params_from(back, x.config) == x.params, "checkpoint params validate");

    const auto bytes = read_file_bytes(dir / "a.hcan");
    auto corrupt = [&](std::function<void(std::vector<std::uint8_t>&)> edit, const char* needle) {
        auto b = bytes;
        edit(b);
        write_file_bytes(dir / "bad.hcan", b);
        return raises<FormatError>([&] { load_checkpoint(dir / "bad.hcan"); }, needle);
    };
    expect(corrupt([](auto& b) { b[0] = 'X'; }, "magic"), "checkpoint magic");
    expect(corrupt([](auto& b) { b[4] = 7; }, "version"), "checkpoint version");
    expect(corrupt([](auto& b) { b.resize(b.size() - 3); }, "corrupt length"), "checkpoint truncation");
    expect(corrupt([](auto& b) { b.push_back(1); }, "corrupt length"), "checkpoint trailing bytes");
    expect(raises<PathError>([&] { load_checkpoint(dir / "absent.hcan"); }, "not found"), "checkpoint missing");

    Tensor t = x.grid.features;
    write_grid(dir / "g.fgrd", FeatureGrid(t));
    const Tensor g = read_grid(dir / "g.fgrd").features;
    bool declared = g.shape() == t.shape();
    for (std::size_t i = 0; declared && i < t.size(); i++)
        declared = g[i] == static_cast<double>(static_cast<float>(t[i])) && std::abs(g[i] - t[i]) <= 6e-8 * std::abs(t[i]);
    expect(declared, "grid at f32 precision");
    const Tensor g2 = read_grid(dir / "g.fgrd").features;
    write_grid(dir / "g2.fgrd", FeatureGrid(g2));
    expect(read_grid(dir / "g2.fgrd").features == g2, "grid f32 values lossless");

    const auto gbytes = read_file_bytes(dir / "g.fgrd");
    auto gcorrupt = [&](std::function<void(std::vector<std::uint8_t>&)> edit, const char* needle) {
        auto b = gbytes;
        edit(b);
        write_file_bytes(dir / "bad.fgrd", b);
        return raises<FormatError>([&] { read_grid(dir / "bad.fgrd"); }, needle);
    };
    expect(gcorrupt([](auto& b) { b[3] = 'X'; }, "magic"), "grid magic");
    expect(gcorrupt([](auto& b) { b[4] = 2; }, "version"), "grid version");
    expect(gcorrupt([](auto& b) { b.pop_back(); }, "corrupt length"), "grid truncation");
    expect(raises<PathError>([&] { read_grid(dir / "absent.fgrd"); }, "not found"), "grid missing");

    std::string d = failed.empty() ? "checkpoint bit-exact, grid exact at f32, 9 corruption and missing-file cases raise" : "failed:";
    for (auto& f : failed) d += " " + f;
    return {failed.empty(), d};
}

// ---- 9 ------------------------------------------------------------------------------------

Verdict determinism() {
    ensure_synthetic();
    json cfg = json::parse(slurp(g_source / "configs" / "synthetic_alternating.json"));
    cfg["train"]["max_epochs"] = 3;
    cfg["data"] = {{"train", (g_work / "data" / "train.jsonl").string()}, {"val", (g_work / "data" / "val.jsonl").string()}};
    cfg["out"] = (g_work / "det").string();
    std::ofstream(g_work / "det.json") << cfg.dump(2);
    const std::vector<std::string> files{"checkpoint_last.hcan", "checkpoint_best.hcan", "train_log.jsonl", "report.json",
                                         "run_config.json"};
    std::vector<std::string> first;
    for (int run = 0; run < 2; run++) {
        fs::remove_all(g_work / "det");
        std::string out;
        if (hcan_run({"train", "--config", (g_work / "det.json").string()}, &out) != 0) return {false, "train failed"};
        if (run == 0)
            for (auto& f : files) first.push_back(slurp(g_work / "det" / f));
    }
    std::size_t same = 0, bytes = 0;
    for (std::size_t i = 0; i < files.size(); i++) {
        const auto again = slurp(g_work / "det" / files[i]);
        same += !again.empty() && again == first[i];
        bytes += again.size();
    }
    return {same == files.size(), std::to_string(same) + "/" + std::to_string(files.size()) +
                                      " files byte-identical over two 3-epoch runs (" + std::to_string(bytes) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"gradient integrity", gradient_integrity}, {"normalization", normalization},
        {"convexity", convexity},                   {"permutation equivariance", permutation},
        {"oracle equivalence", oracle_equivalence}, {"desk-scale learning", learning},
        {"ablation harness", ablation_harness},     {"format durability", format_durability},
        {"determinism", determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; i++) only.insert(std::atoi(argv[i]));

    g_work = fs::temp_directory_path() / "hcan_acceptance";
    fs::create_directories(g_work);

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); i++) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failures += v.pass ? 0 : 1;
        std::cout << "criterion " << id << " [" << criteria[i].first << "]: " << (v.pass ? "PASS" : "FAIL") << " ("
                  << v.detail << ")" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
