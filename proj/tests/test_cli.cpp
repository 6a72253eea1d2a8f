#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "hcan/checkpoint.hpp"
#include "hcan/cli.hpp"
#include "hcan/errors.hpp"

using namespace hcan;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result hcan_run(std::vector<std::string> args) {
    args.insert(args.begin(), "hcan");
    std::ostringstream out, err;
    int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<json> jsonl(const fs::path& p) {
    std::vector<json> rows;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);) rows.push_back(json::parse(line));
    return rows;
}

json small_run(const fs::path& dir, std::size_t epochs) {
    return {{"model", {{"d", 32}, {"k", 8}, {"h_s", 16}, {"mechanism", "alternating"}, {"dropout", 0.2}}},
            {"optimizer", {{"lr", 0.002}}},
            {"train", {{"max_epochs", epochs}, {"patience", 50}, {"batch_size", 8}, {"seed", 4}}},
            {"data", {{"train", (dir / "data" / "train.jsonl").string()}, {"val", (dir / "data" / "val.jsonl").string()}}},
            {"out", (dir / "run").string()}};
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST_CASE("exit codes") {
    auto dir = fixtures::scratch("cli_codes");
    CHECK(hcan_run({}).code == 2);
    CHECK(hcan_run({"bogus"}).code == 2);
    auto help = hcan_run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("gradcheck") != std::string::npos);
    CHECK(hcan_run({"train"}).code == 2);
    CHECK(hcan_run({"train", "--config", (dir / "none.json").string()}).code == 2);
    std::ofstream(dir / "broken.json") << "{oops";
    CHECK(hcan_run({"train", "--config", (dir / "broken.json").string()}).code == 2);
    write_json(dir / "badmech.json", {{"model", {{"mechanism", "serial"}}}});
    CHECK(hcan_run({"train", "--config", (dir / "badmech.json").string()}).code == 2);
    CHECK(hcan_run({"synth", "--grid", "0x2", "--out", (dir / "s").string()}).code == 2);
    CHECK(hcan_run({"synth", "--grid", "3x2", "--out", (dir / "s").string()}).code == 2);
    CHECK(hcan_run({"synth", "--grid", "axb", "--out", (dir / "s").string()}).code == 2);
    CHECK(hcan_run({"synth", "--d", "4", "--out", (dir / "s").string()}).code == 2);
    auto missing = hcan_run({"eval", "--checkpoint", (dir / "no.hcan").string(), "--data", (dir / "no.jsonl").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("no.hcan") != std::string::npos);
    CHECK(hcan_run({"gradcheck", "--inject-fault", "everything"}).code == 2);
}

TEST_CASE("gradcheck on one configuration, with and without a fault") {
    auto dir = fixtures::scratch("cli_grad");
    write_json(dir / "g.json", {{"model",
                                 {{"vocab_size", 6}, {"d", 4}, {"k", 3}, {"h_s", 3}, {"max_length", 3},
                                  {"locations", 2}, {"answers", 3}, {"dropout", 0.0}, {"mechanism", "parallel"}}}});
    auto ok = hcan_run({"gradcheck", "--config", (dir / "g.json").string(), "--out", (dir / "r.json").string()});
    CHECK(ok.code == 0);
    auto report = json::parse(slurp(dir / "r.json"));
    CHECK(report["passed"] == true);
    CHECK(report["step"] == 1e-5);
    CHECK(report["variants"].size() == 1);
    auto bad = hcan_run({"gradcheck", "--config", (dir / "g.json").string(), "--inject-fault", "sigmoid-backward"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("lstm.w_input") != std::string::npos);
    CHECK(bad.err.find("answer.w_out") == std::string::npos);
}

TEST_CASE("synth, train, resume, eval and attend") {
    auto dir = fixtures::scratch("cli_flow");
    auto synth = hcan_run({"synth", "--n", "40", "--seed", "5", "--out", (dir / "data").string()});
    REQUIRE(synth.code == 0);
    CHECK(json::parse(synth.out)["train"] == 32);
    CHECK(fs::exists(dir / "data" / "grids" / "val-0.fgrd"));

    write_json(dir / "run.json", small_run(dir, 2));
    auto tr = hcan_run({"train", "--config", (dir / "run.json").string()});
    REQUIRE(tr.code == 0);
    auto log = jsonl(dir / "run" / "train_log.jsonl");
    REQUIRE(log.size() == 2);
    CHECK(log[1]["epoch"] == 2);
    CHECK(log[1]["steps"] == 4);
    CHECK(log[0]["config_hash"].get<std::string>().size() == 16);
    for (const char* f : {"checkpoint_last.hcan", "checkpoint_best.hcan", "vocab_question.txt", "vocab_answer.txt",
                          "run_config.json", "report.json"})
        CHECK(fs::exists(dir / "run" / f));
    auto ck = load_checkpoint(dir / "run" / "checkpoint_last.hcan");
    CHECK(ck.config["progress"]["epoch"] == 2);
    CHECK(ck.tensors.contains("rmsprop.embed.table"));

    // the resumed run picks up at epoch 3
    write_json(dir / "run.json", small_run(dir, 4));
    auto resumed = hcan_run({"train", "--config", (dir / "run.json").string(), "--resume",
                             (dir / "run" / "checkpoint_last.hcan").string()});
    REQUIRE(resumed.code == 0);
    log = jsonl(dir / "run" / "train_log.jsonl");
    REQUIRE(log.size() == 4);
    CHECK(log[2]["epoch"] == 3);
    CHECK(log[3]["epoch"] == 4);

    // resuming under a different model is refused
    auto other = small_run(dir, 4);
    other["model"]["k"] = 9;
    write_json(dir / "other.json", other);
    CHECK(hcan_run({"train", "--config", (dir / "other.json").string(), "--resume",
                    (dir / "run" / "checkpoint_last.hcan").string()})
              .code == 2);

    auto best = (dir / "run" / "checkpoint_best.hcan").string();
    auto val = (dir / "data" / "val.jsonl").string();
    REQUIRE(hcan_run({"eval", "--checkpoint", best, "--data", val, "--out", (dir / "e1.json").string()}).code == 0);
    REQUIRE(hcan_run({"eval", "--checkpoint", best, "--data", val, "--out", (dir / "e2.json").string()}).code == 0);
    CHECK(slurp(dir / "e1.json") == slurp(dir / "e2.json"));
    auto metrics = json::parse(slurp(dir / "e1.json"));
    CHECK(metrics["total"] == 8);
    CHECK(metrics["accuracy"].get<double>() == doctest::Approx(metrics["correct"].get<double>() / 8.0));
    CHECK(metrics["per_type"].is_object());

    auto att = hcan_run({"attend", "--checkpoint", best, "--data", val, "--out", (dir / "att").string()});
    REQUIRE(att.code == 0);
    CHECK(json::parse(att.out)["written"].size() == 8);
    auto one = json::parse(slurp(dir / "att" / "val-0.json"));
    const auto qlen = one["question"].size();
    for (const char* level : {"word", "phrase", "sentence"}) {
        auto av = one["levels"][level]["a_v"].get<std::vector<double>>();
        auto aq = one["levels"][level]["a_q"].get<std::vector<double>>();
        CHECK(av.size() == 4);
        CHECK(aq.size() == qlen);
        double s = 0;
        for (double v : av) s += v;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        s = 0;
        for (double v : aq) s += v;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(one["probabilities"].is_array());
    CHECK(one.contains("predicted"));
    CHECK(hcan_run({"attend", "--checkpoint", best, "--data", val, "--example", "val-99", "--out",
                    (dir / "att").string()})
              .code == 1);
}

TEST_CASE("model dimension must match the data") {
    auto dir = fixtures::scratch("cli_dim");
    REQUIRE(hcan_run({"synth", "--n", "10", "--out", (dir / "data").string()}).code == 0);
    auto cfg = small_run(dir, 1);
    cfg["model"]["d"] = 16;
    write_json(dir / "run.json", cfg);
    CHECK(hcan_run({"train", "--config", (dir / "run.json").string()}).code == 2);
}

TEST_CASE("run config round trip and hashing") {
    cli::RunConfig rc;
    rc.model.mechanism = Mechanism::maxout;
    rc.train.seed = 12;
    rc.model.seed = 12;
    rc.train_data = "a/train.jsonl";
    rc.out_dir = "runs/x";
    auto back = cli::run_config_from_json(cli::to_json(rc));
    CHECK(cli::to_json(back) == cli::to_json(rc));
    CHECK(back.model.mechanism == Mechanism::maxout);
    CHECK(back.model.seed == 12);
    CHECK(back.train_data == rc.train_data);
    const auto h = cli::config_hash(cli::to_json(rc));
    CHECK(h.size() == 16);
    CHECK(h == cli::config_hash(cli::to_json(back)));
    rc.train.seed = 13;
    CHECK(h != cli::config_hash(cli::to_json(rc)));
    // FNV-1a of the empty object text "{}"
    std::uint64_t f = 0xcbf29ce484222325ULL;
    for (char c : std::string("{}")) f = (f ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << f;
    CHECK(cli::config_hash(json::object()) == hex.str());
}

TEST_CASE("thread cap from the environment") {
    setenv("HCAN_THREADS", "1", 1);
    CHECK(cli::worker_threads() == 1);
    setenv("HCAN_THREADS", "many", 1);
    CHECK_THROWS_AS(cli::worker_threads(), ConfigError);
    unsetenv("HCAN_THREADS");
    CHECK(cli::worker_threads() >= 1);
}
