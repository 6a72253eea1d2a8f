#include "hcan/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "hcan/checkpoint.hpp"
#include "hcan/data_io.hpp"
#include "hcan/errors.hpp"

namespace hcan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- run configuration -------------------------------------------------------------

json to_json(const RunConfig& c) {
    return {
        {"model", hcan::to_json(c.model)},
        {"optimizer",
         {{"lr", c.optimizer.lr},
          {"alpha", c.optimizer.alpha},
          {"weight_decay", c.optimizer.weight_decay},
          {"epsilon", c.optimizer.epsilon}}},
        {"train",
         {{"max_epochs", c.train.max_epochs},
          {"patience", c.train.patience},
          {"batch_size", c.train.batch_size},
          {"seed", c.train.seed},
          {"max_answers", c.max_answers}}},
        {"data", {{"train", c.train_data.generic_string()}, {"val", c.val_data.generic_string()}}},
        {"out", c.out_dir.generic_string()},
    };
}

RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    RunConfig c;
    try {
        if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            c.optimizer.lr = o.value("lr", c.optimizer.lr);
            c.optimizer.alpha = o.value("alpha", c.optimizer.alpha);
            c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
            c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
            c.train.patience = t.value("patience", c.train.patience);
            c.train.batch_size = t.value("batch_size", c.train.batch_size);
            c.train.seed = t.value("seed", c.train.seed);
            c.max_answers = t.value("max_answers", c.max_answers);
        }
        if (j.contains("data")) {
            c.train_data = j.at("data").value("train", std::string());
            c.val_data = j.at("data").value("val", std::string());
        }
        c.out_dir = j.value("out", c.out_dir.generic_string());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    c.model.seed = c.train.seed;
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

std::string config_hash(const json& canonical) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

std::size_t worker_threads() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* cap = std::getenv("HCAN_THREADS")) {
        try {
            const long v = std::stol(cap);
            if (v >= 1) n = std::min(n, static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ConfigError(std::string("HCAN_THREADS must be a positive integer, got '") + cap + "'");
        }
    }
    return n;
}

// ---- helpers ------------------------------------------------------------------------

namespace {

constexpr const char* kOptimizerPrefix = "rmsprop.";

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw PathError("cannot write '" + path.string() + "'");
    out << text;
}

Checkpoint make_checkpoint(const json& base, const ParamStore& params, const OptimizerState& opt,
                           const TrainProgress& progress) {
    Checkpoint ck;
    ck.config = base;
    ck.config["progress"] = {{"epoch", progress.epoch},
                             {"best_val_accuracy", progress.best_val_accuracy},
                             {"best_epoch", progress.best_epoch},
                             {"since_best", progress.since_best}};
    ck.tensors = params;
    for (const auto& [name, value] : opt.squared) ck.tensors.add(kOptimizerPrefix + name, value);
    return ck;
}

struct LoadedModel {
    ModelConfig model;
    Vocabulary questions;
    Vocabulary answers;
    ParamStore params;
    std::string hash;
};

LoadedModel load_model(const fs::path& path) {
    Checkpoint ck = load_checkpoint(path);
    LoadedModel m;
    try {
        m.model = model_config_from_json(ck.config.at("model"));
        m.questions = Vocabulary::from_tokens(ck.config.at("vocab").at("question").get<std::vector<std::string>>(), true);
        m.answers = Vocabulary::from_tokens(ck.config.at("vocab").at("answer").get<std::vector<std::string>>(), false);
        m.hash = ck.config.value("config_hash", std::string());
    } catch (const json::exception& e) {
        throw FormatError("checkpoint '" + path.string() + "' lacks model metadata: " + e.what());
    }
    m.params = model_params_from(ck, m.model, kOptimizerPrefix);
    return m;
}

json accuracy_json(const Accuracy& a) {
    return {{"accuracy", a.value()}, {"correct", a.correct}, {"total", a.total}};
}

std::vector<double> values_of(const Tensor& t, std::size_t count) {
    return {t.data().begin(), t.data().begin() + static_cast<std::ptrdiff_t>(count)};
}

}  // namespace

// ---- train -----------------------------------------------------------------------------

TrainOutcome run_train(const RunConfig& rc, std::ostream& log, const std::optional<fs::path>& resume) {
    if (rc.train_data.empty() || rc.val_data.empty()) throw ConfigError("run config needs data.train and data.val");
    const Dataset train = read_dataset(rc.train_data);
    const Dataset val = read_dataset(rc.val_data);
    if (train.empty()) throw ParameterError("training set '" + rc.train_data.string() + "' is empty");
    if (val.empty()) throw ParameterError("validation set '" + rc.val_data.string() + "' is empty");
    const VocabularyPair vocab = build_vocab(train, rc.max_answers);

    ModelConfig m = rc.model;
    m.vocab_size = vocab.question.size();
    m.answers = vocab.answer.size();
    m.max_length = 1;
    for (const auto* split : {&train, &val})
        for (const auto& e : *split) m.max_length = std::max(m.max_length, e.question.size());
    m.locations = train.front().grid.locations();
    if (train.front().grid.dim() != m.d) {
        throw ConfigError("model d = " + std::to_string(m.d) + " but the feature grids have d = " +
                          std::to_string(train.front().grid.dim()));
    }
    if (val.front().grid.features.shape() != train.front().grid.features.shape()) {
        throw DimensionError("validation grids differ in shape from training grids");
    }
    m.validate();

    const json run_json = to_json(rc);
    const std::string hash = config_hash(run_json);
    json base = {{"run", run_json},
                 {"model", hcan::to_json(m)},
                 {"vocab", {{"question", vocab.question.tokens()}, {"answer", vocab.answer.tokens()}}},
                 {"answer_coverage", vocab.answer_coverage},
                 {"config_hash", hash}};

    RmsPropConfig opt_config = rc.optimizer;
    opt_config.decay_exempt_rows = {{"embed.table", {kPadId}}};
    ParamStore params;
    OptimizerState optimizer;
    TrainProgress progress;
    if (resume) {
        Checkpoint ck = load_checkpoint(*resume);
        if (!ck.config.contains("model") || ck.config.at("model") != base.at("model")) {
            throw ConfigError("checkpoint '" + resume->string() + "' was trained with a different model config");
        }
        params = model_params_from(ck, m, kOptimizerPrefix);
        optimizer = make_optimizer_state(params, opt_config);
        for (auto& [name, value] : optimizer.squared) {
            const std::string key = kOptimizerPrefix + name;
            if (!ck.tensors.contains(key)) throw FormatError("checkpoint lacks optimizer state '" + key + "'");
            if (ck.tensors.at(key).shape() != value.shape()) throw DimensionError("optimizer state '" + key + "' has the wrong shape");
            value = ck.tensors.at(key);
        }
        const auto& p = ck.config.at("progress");
        progress.epoch = p.at("epoch").get<std::size_t>();
        progress.best_val_accuracy = p.at("best_val_accuracy").get<double>();
        progress.best_epoch = p.at("best_epoch").get<std::size_t>();
        progress.since_best = p.at("since_best").get<std::size_t>();
    } else {
        params = init_params(m, m.seed);
        optimizer = make_optimizer_state(params, opt_config);
    }

    const auto train_set = encode_dataset(train, vocab.question, vocab.answer, m.max_length);
    const auto val_set = encode_dataset(val, vocab.question, vocab.answer, m.max_length);

    fs::create_directories(rc.out_dir);
    vocab.question.save(rc.out_dir / "vocab_question.txt");
    vocab.answer.save(rc.out_dir / "vocab_answer.txt");
    write_text(rc.out_dir / "run_config.json", run_json.dump(2) + "\n");
    std::ofstream log_file(rc.out_dir / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
    if (!log_file) throw PathError("cannot write training log in '" + rc.out_dir.string() + "'");

    const fs::path best_path = rc.out_dir / "checkpoint_best.hcan";
    TrainConfig tc = rc.train;
    tc.threads = worker_threads();
    TrainReport report = train_loop(
        m, params, optimizer, train_set, val_set, tc, progress,
        [&](const EpochStats& s, const ParamStore& p, const OptimizerState& o, const TrainProgress& pr) {
            const json line = {{"epoch", s.epoch},
                               {"steps", s.steps},
                               {"train_loss", s.train_loss},
                               {"train_accuracy", s.train_accuracy},
                               {"val_accuracy", s.val_accuracy},
                               {"best_val_accuracy", s.best_val_accuracy},
                               {"improved", s.improved},
                               {"config_hash", hash}};
            log << line.dump() << '\n';
            log_file << line.dump() << '\n';
            log_file.flush();
            const Checkpoint ck = make_checkpoint(base, p, o, pr);
            save_checkpoint(rc.out_dir / "checkpoint_last.hcan", ck);
            if (s.improved) save_checkpoint(best_path, ck);
        });
    report.best_checkpoint = best_path.generic_string();

    json epochs = json::array();
    for (const auto& s : report.epochs) {
        epochs.push_back({{"epoch", s.epoch},
                          {"train_loss", s.train_loss},
                          {"train_accuracy", s.train_accuracy},
                          {"val_accuracy", s.val_accuracy}});
    }
    const json summary = {{"config_hash", hash},
                          {"stop_epoch", report.stop_epoch},
                          {"best_epoch", report.best_epoch},
                          {"best_val_accuracy", report.best_val_accuracy},
                          {"early_stopped", report.early_stopped},
                          {"best_checkpoint", report.best_checkpoint},
                          {"epochs", epochs}};
    write_text(rc.out_dir / "report.json", summary.dump(2) + "\n");
    return {report, m, hash};
}

// ---- eval ---------------------------------------------------------------------------

json run_eval(const fs::path& checkpoint, const fs::path& data) {
    const LoadedModel m = load_model(checkpoint);
    const Dataset ds = read_dataset(data);
    const auto encoded = encode_dataset(ds, m.questions, m.answers, m.model.max_length);
    const EvalResult r = evaluate(m.model, m.params, encoded);
    json per_type = json::object();
    for (const auto& [type, acc] : r.per_type) per_type[type] = accuracy_json(acc);
    return {{"accuracy", r.overall.value()},
            {"correct", r.overall.correct},
            {"total", r.overall.total},
            {"mean_loss", r.mean_loss},
            {"per_type", per_type},
            {"config_hash", m.hash}};
}

// ---- attend -------------------------------------------------------------------------

std::vector<fs::path> run_attend(const fs::path& checkpoint, const fs::path& data, const fs::path& out_dir,
                                 const std::optional<std::string>& example_id) {
    const LoadedModel m = load_model(checkpoint);
    const Dataset ds = read_dataset(data);
    std::vector<fs::path> written;
    for (const auto& e : ds) {
        if (example_id && e.id != *example_id) continue;
        if (e.grid.dim() != m.model.d || e.grid.locations() != m.model.locations) {
            throw DimensionError("example '" + e.id + "' grid " + e.grid.features.shape_str() +
                                 " does not match the checkpoint's [" + std::to_string(m.model.d) + " x " +
                                 std::to_string(m.model.locations) + "]");
        }
        const auto encoded = encode_dataset(Dataset{e}, m.questions, m.answers, m.model.max_length);
        const auto& x = encoded.front();
        Graph graph;
        ParamVars vars(graph, m.params);
        const ForwardOutput out = forward(graph, vars, m.model, x.tokens, x.grid, Mode::eval);
        const Tensor& probs = out.answer.probs.value();

        json levels = json::object();
        json target_mass = json::object();
        for (std::size_t level = 0; level < 3; ++level) {
            const Tensor& a_v = out.levels[level].a_v.value();
            levels[kLevelKeys[level]] = {{"a_v", values_of(a_v, a_v.size())},
                                         {"a_q", values_of(out.levels[level].a_q.value(), x.tokens.length)}};
            if (e.planted && e.planted->target_cell) target_mass[kLevelKeys[level]] = a_v[*e.planted->target_cell];
        }
        json doc = {{"id", e.id},
                    {"question", e.question},
                    {"levels", levels},
                    {"predicted", m.answers.token(predict(probs))},
                    {"answer", e.answer},
                    {"answers", m.answers.tokens()},
                    {"probabilities", values_of(probs, probs.size())},
                    {"config_hash", m.hash}};
        if (e.planted && e.planted->target_cell) {
            doc["target_cell"] = *e.planted->target_cell;
            doc["target_cell_mass"] = target_mass;
        }
        const fs::path path = out_dir / (e.id + ".json");
        write_text(path, doc.dump(2) + "\n");
        written.push_back(path);
    }
    if (example_id && written.empty()) throw IndexError("no example with id '" + *example_id + "' in " + data.string());
    return written;
}

// ---- gradcheck ------------------------------------------------------------------------

ModelConfig gradcheck_base_config() {
    ModelConfig c;
    c.vocab_size = 10;
    c.d = 8;
    c.k = 6;
    c.h_s = 7;
    c.max_length = 5;
    c.locations = 4;
    c.answers = 5;
    c.dropout = 0.0;
    return c;
}

std::vector<ModelConfig> gradcheck_variants(const ModelConfig& base) {
    std::vector<ModelConfig> out;
    struct Mech {
        Mechanism m;
        std::size_t rounds;
    };
    for (const Mech& mech : {Mech{Mechanism::parallel, 1}, Mech{Mechanism::maxout, 1}, Mech{Mechanism::alternating, 1},
                             Mech{Mechanism::alternating, 2}}) {
        for (auto a : kAblations) {
            ModelConfig c = base;
            c.mechanism = mech.m;
            c.rounds = mech.rounds;
            c.ablation = a;
            out.push_back(c);
        }
    }
    ModelConfig shared = base;
    shared.mechanism = Mechanism::alternating;
    shared.rounds = 2;
    shared.share_alternating_params = true;
    out.push_back(shared);
    return out;
}

GradCheckVariant run_gradcheck_variant(const ModelConfig& model, Fault fault, std::uint64_t seed) {
    model.validate();
    ParamStore params = init_params(model, seed);
    // Non-zero biases so bias paths are exercised away from the origin.
    Rng rng(mix_seed(seed, 1));
    std::uniform_real_distribution<double> small(-0.2, 0.2);
    for (auto& [name, value] : params) {
        if (value.rank() == 1)
            for (auto& v : value.data()) v += small(rng);
    }
    std::normal_distribution<double> unit(0.0, 1.0);
    Tensor grid_values({model.d, model.locations});
    for (auto& v : grid_values.data()) v = unit(rng);
    const FeatureGrid grid(std::move(grid_values));

    // One full-length question and one padded question.
    std::vector<QuestionTokens> questions;
    std::vector<std::size_t> targets;
    std::uniform_int_distribution<std::size_t> token(2, model.vocab_size - 1);
    for (std::size_t len : {model.max_length, std::max<std::size_t>(1, (model.max_length + 1) / 2)}) {
        std::vector<std::size_t> ids(len);
        for (auto& id : ids) id = token(rng);
        questions.push_back(QuestionTokens::make(std::move(ids), model.max_length));
        targets.push_back(questions.size() % model.answers);
    }

    auto closure = graph_closure(
        [&](Graph& g, const ParamVars& vars) {
            Var total;
            for (std::size_t i = 0; i < questions.size(); ++i) {
                ForwardOutput out = forward(g, vars, model, questions[i], grid, Mode::eval);
                Var loss = ad::cross_entropy(out.answer.logits, targets[i]);
                total = i == 0 ? loss : ad::add(total, loss);
            }
            return total;
        },
        GraphOptions{fault});
    GradCheckOptions opts;
    opts.seed = seed;
    return {model, grad_check(closure, std::move(params), opts)};
}

json gradcheck_report_json(const std::vector<GradCheckVariant>& variants) {
    json out_variants = json::array();
    json failing = json::array();
    bool passed = true;
    double tolerance = 0.0;
    for (const auto& v : variants) {
        const std::string label = to_string(v.model.mechanism) + "/rounds=" + std::to_string(v.model.rounds) +
                                  (v.model.share_alternating_params ? "/shared" : "") + "/" + to_string(v.model.ablation);
        json tensors = json::array();
        for (const auto& t : v.report.tensors) {
            tensors.push_back({{"name", t.name},
                               {"coordinates", t.coordinates_checked},
                               {"max_relative_error", t.finite ? json(t.max_relative_error) : json("non-finite")},
                               {"worst_index", t.worst_index},
                               {"analytic_at_worst", t.analytic_at_worst},
                               {"numeric_at_worst", t.numeric_at_worst},
                               {"passed", t.passed}});
            if (!t.passed) failing.push_back(label + ":" + t.name);
        }
        passed = passed && v.report.passed;
        tolerance = v.report.tolerance;
        out_variants.push_back({{"variant", label},
                                {"mechanism", to_string(v.model.mechanism)},
                                {"rounds", v.model.rounds},
                                {"ablation", to_string(v.model.ablation)},
                                {"passed", v.report.passed},
                                {"tensors", tensors}});
    }
    return {{"tolerance", tolerance}, {"step", GradCheckOptions{}.step}, {"passed", passed},
            {"failing", failing},     {"variants", out_variants}};
}

// ---- ablate ---------------------------------------------------------------------------

std::vector<AblationRow> run_ablate(const RunConfig& config, std::ostream& log) {
    std::vector<AblationRow> rows;
    for (auto a : kAblations) {
        RunConfig rc = config;
        rc.model.ablation = a;
        rc.out_dir = config.out_dir / to_string(a);
        std::ostringstream epoch_log;
        TrainOutcome outcome = run_train(rc, epoch_log);
        AblationRow row{a, outcome.report, outcome.report.epochs.empty() ? 0.0 : outcome.report.epochs.back().train_accuracy};
        log << std::left << std::setw(22) << to_string(a) << " best_val=" << std::fixed << std::setprecision(4)
            << row.report.best_val_accuracy << " train=" << row.final_train_accuracy
            << " epochs=" << row.report.stop_epoch << '\n';
        log.unsetf(std::ios::floatfield);
        rows.push_back(std::move(row));
    }
    return rows;
}

json ablation_table_json(const std::vector<AblationRow>& rows, const std::string& hash) {
    json table = json::array();
    for (const auto& r : rows) {
        table.push_back({{"variant", to_string(r.ablation)},
                         {"best_val_accuracy", r.report.best_val_accuracy},
                         {"best_epoch", r.report.best_epoch},
                         {"final_train_accuracy", r.final_train_accuracy},
                         {"epochs", r.report.stop_epoch}});
    }
    return {{"config_hash", hash}, {"rows", table}};
}

// ---- command line ------------------------------------------------------------------------

namespace {

std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
    const auto x = text.find('x');
    std::size_t rows = 0, cols = 0;
    try {
        if (x == std::string::npos) throw std::invalid_argument("missing x");
        rows = std::stoul(text.substr(0, x));
        cols = std::stoul(text.substr(x + 1));
    } catch (const std::exception&) {
        throw ConfigError("--grid expects ROWSxCOLS, got '" + text + "'");
    }
    if (rows == 0 || cols == 0) throw ConfigError("--grid extents must be positive, got '" + text + "'");
    if (rows != cols) throw ConfigError("--grid must be square, got '" + text + "'");
    return {rows, cols};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical co-attention VQA toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic VQA-style dataset");
    std::size_t synth_n = 500;
    std::string synth_grid = "2x2";
    std::size_t synth_d = 32;
    double synth_val = 0.2;
    double synth_noise = 0.1;
    synth->add_option("--n", synth_n, "Total number of examples (train + val)");
    synth->add_option("--grid", synth_grid, "Grid size as GxG");
    synth->add_option("--d", synth_d, "Feature dimension");
    synth->add_option("--val-fraction", synth_val, "Fraction of examples in the validation split");
    synth->add_option("--noise", synth_noise, "Feature noise standard deviation");
    synth->add_option("--config", config_path, "Synthetic spec JSON (flags override it)");
    synth->add_option("--seed", seed, "Random seed");
    synth->add_option("--out", out_dir, "Output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "Train a model from a run config");
    std::string resume;
    train->add_option("--config", config_path, "Run config JSON")->required();
    train->add_option("--seed", seed, "Override the seed");
    train->add_option("--out", out_dir, "Override the output directory");
    train->add_option("--resume", resume, "Checkpoint to resume from");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string checkpoint, data;
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    eval->add_option("--data", data, "Dataset (.jsonl)")->required();
    eval->add_option("--out", out_dir, "Also write metrics JSON to this file");

    // attend
    auto* attend = app.add_subcommand("attend", "Export co-attention maps");
    std::string example_id;
    attend->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    attend->add_option("--data", data, "Dataset (.jsonl)")->required();
    attend->add_option("--example", example_id, "Only this example id");
    attend->add_option("--out", out_dir, "Output directory")->required();

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
    std::string fault_name = "none";
    gradcheck->add_option("--config", config_path, "Run config whose model section selects a single variant");
    gradcheck->add_option("--seed", seed, "Seed for parameters and inputs");
    gradcheck->add_option("--out", out_dir, "Also write the JSON report to this file");
    gradcheck->add_option("--inject-fault", fault_name, "Corrupt a backward rule (none, sigmoid-backward)");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Train every ablation variant under one budget");
    ablate->add_option("--config", config_path, "Run config JSON")->required();
    ablate->add_option("--seed", seed, "Override the seed");
    ablate->add_option("--out", out_dir, "Override the output directory");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    auto load_run = [&]() {
        RunConfig rc = load_run_config(config_path);
        if (seed) {
            rc.train.seed = *seed;
            rc.model.seed = *seed;
        }
        if (!out_dir.empty()) rc.out_dir = out_dir;
        return rc;
    };

    try {
        if (synth->parsed()) {
            SyntheticSpec spec;
            if (!config_path.empty()) {
                std::ifstream in(config_path);
                if (!in) throw ConfigError("cannot open synthetic spec '" + config_path + "'");
                spec = synthetic_spec_from_json(json::parse(in));
            }
            if (synth->count("--n")) spec.num_examples = synth_n;
            if (synth->count("--grid") || config_path.empty()) spec.grid_side = parse_grid(synth_grid).first;
            if (synth->count("--d") || config_path.empty()) spec.d = synth_d;
            if (synth->count("--val-fraction")) spec.val_fraction = synth_val;
            if (synth->count("--noise")) spec.noise = synth_noise;
            if (seed) spec.seed = *seed;
            if (spec.num_examples == 0) throw ConfigError("--n must be at least 1");
            const auto splits = write_synthetic(spec, out_dir);
            out << json{{"train", splits.train.size()},
                        {"val", splits.val.size()},
                        {"out", out_dir},
                        {"config_hash", config_hash(to_json(spec))}}
                       .dump()
                << '\n';
        } else if (train->parsed()) {
            const RunConfig rc = load_run();
            std::optional<fs::path> resume_path;
            if (!resume.empty()) resume_path = resume;
            const TrainOutcome o = run_train(rc, out, resume_path);
            out << json{{"stop_epoch", o.report.stop_epoch},
                        {"best_epoch", o.report.best_epoch},
                        {"best_val_accuracy", o.report.best_val_accuracy},
                        {"best_checkpoint", o.report.best_checkpoint},
                        {"config_hash", o.config_hash}}
                       .dump()
                << '\n';
        } else if (eval->parsed()) {
            const json metrics = run_eval(checkpoint, data);
            out << metrics.dump(2) << '\n';
            if (!out_dir.empty()) write_text(out_dir, metrics.dump(2) + "\n");
        } else if (attend->parsed()) {
            std::optional<std::string> only;
            if (!example_id.empty()) only = example_id;
            const auto paths = run_attend(checkpoint, data, out_dir, only);
            json listing = json::array();
            for (const auto& p : paths) listing.push_back(p.generic_string());
            out << json{{"written", listing}}.dump() << '\n';
        } else if (gradcheck->parsed()) {
            Fault fault = Fault::none;
            if (fault_name == "sigmoid-backward") {
                fault = Fault::sigmoid_backward;
            } else if (fault_name != "none") {
                throw ConfigError("unknown fault '" + fault_name + "'");
            }
            std::vector<ModelConfig> configs;
            if (!config_path.empty()) {
                configs.push_back(load_run_config(config_path).model);
            } else {
                configs = gradcheck_variants(gradcheck_base_config());
            }
            std::vector<GradCheckVariant> results;
            for (const auto& c : configs) results.push_back(run_gradcheck_variant(c, fault, seed.value_or(11)));
            const json report = gradcheck_report_json(results);
            out << report.dump(2) << '\n';
            if (!out_dir.empty()) write_text(out_dir, report.dump(2) + "\n");
            if (!report.at("passed").get<bool>()) {
                std::map<std::string, std::size_t> tensors;
                for (const auto& f : report.at("failing")) {
                    const auto label = f.get<std::string>();
                    ++tensors[label.substr(label.rfind(':') + 1)];
                }
                err << "gradient check failed for:";
                for (const auto& [name, variants] : tensors) err << ' ' << name << " (" << variants << " variants)";
                err << '\n';
                return kExitRuntime;
            }
        } else if (ablate->parsed()) {
            const RunConfig rc = load_run();
            const auto rows = run_ablate(rc, out);
            const json table = ablation_table_json(rows, config_hash(to_json(rc)));
            write_text(rc.out_dir / "ablation.json", table.dump(2) + "\n");
            out << table.dump(2) << '\n';
        }
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace hcan::cli
