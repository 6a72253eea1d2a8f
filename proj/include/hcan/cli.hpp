#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hcan/grad_check.hpp"
#include "hcan/model.hpp"
#include "hcan/training.hpp"
#include "json.hpp"

namespace hcan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Everything that determines a training run, together with the seed.
struct RunConfig {
    ModelConfig model;  // dims derived from data are filled in at train time
    RmsPropConfig optimizer;
    TrainConfig train;
    std::size_t max_answers = 1000;
    std::filesystem::path train_data;
    std::filesystem::path val_data;
    std::filesystem::path out_dir = "run";
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// FNV-1a of the canonical JSON text, as 16 hex digits.
std::string config_hash(const nlohmann::json& canonical);

// Worker count: hardware concurrency capped by HCAN_THREADS.
std::size_t worker_threads();

// ---- library entry points behind the subcommands ------------------------------

struct TrainOutcome {
    TrainReport report;
    ModelConfig model;
    std::string config_hash;
};

// Trains per `config`, writing checkpoints, logs and vocabularies into config.out_dir.
TrainOutcome run_train(const RunConfig& config, std::ostream& log,
                       const std::optional<std::filesystem::path>& resume = std::nullopt);

nlohmann::json run_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data);

// Writes one attention export per selected example; returns the written paths.
std::vector<std::filesystem::path> run_attend(const std::filesystem::path& checkpoint,
                                              const std::filesystem::path& data, const std::filesystem::path& out_dir,
                                              const std::optional<std::string>& example_id);

struct GradCheckVariant {
    ModelConfig model;
    GradCheckReport report;
};

// The standard small instance: T_max = 5, N = 4, d = 8, k = 6, A = 5.
ModelConfig gradcheck_base_config();
std::vector<ModelConfig> gradcheck_variants(const ModelConfig& base);
GradCheckVariant run_gradcheck_variant(const ModelConfig& model, Fault fault = Fault::none, std::uint64_t seed = 11);
nlohmann::json gradcheck_report_json(const std::vector<GradCheckVariant>& variants);

struct AblationRow {
    Ablation ablation;
    TrainReport report;
    double final_train_accuracy = 0.0;
};

std::vector<AblationRow> run_ablate(const RunConfig& config, std::ostream& log);
nlohmann::json ablation_table_json(const std::vector<AblationRow>& rows, const std::string& hash);

// Parses argv-style arguments (args[0] is the program name) and runs a
// subcommand. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hcan::cli
