#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hcan/co_attention.hpp"
#include "json.hpp"

namespace hcan {

// ---- vocabulary -------------------------------------------------------------

/// Token <-> id bijection. Ids are assigned by descending frequency, then
/// lexicographically. Question vocabularies reserve id 0 for padding and id 1
/// for unknown tokens; answer vocabularies reserve nothing.
class Vocabulary {
public:
    static constexpr const char* kPad = "<pad>";
    static constexpr const char* kUnk = "<unk>";

    Vocabulary() = default;
    static Vocabulary build(const std::map<std::string, std::size_t>& counts, bool reserve_special,
                            std::optional<std::size_t> max_size = std::nullopt);
    static Vocabulary from_tokens(std::vector<std::string> tokens, bool reserve_special);

    std::size_t size() const { return tokens_.size(); }
    bool reserves_special() const { return reserved_; }
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::optional<std::size_t> find(const std::string& token) const;
    // Unknown tokens map to the unk id when reserved, else IndexError.
    std::size_t id(const std::string& token) const;

    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path, bool reserve_special);

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_ && reserved_ == other.reserved_; }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, std::size_t> index_;
    bool reserved_ = false;
};

// ---- dataset records --------------------------------------------------------

struct Planted {
    std::optional<std::size_t> target_cell;
    std::optional<std::pair<std::size_t, std::size_t>> key_span;  // inclusive token range

    bool operator==(const Planted&) const = default;
};

struct Example {
    std::string id;
    std::vector<std::string> question;
    std::string grid_ref;  // path relative to the dataset file; empty = inline grid
    FeatureGrid grid;
    std::string answer;
    std::string question_type;  // template name, may be empty
    std::optional<Planted> planted;
};

bool operator==(const Example& a, const Example& b);

using Dataset = std::vector<Example>;

// One JSON object per line. Referenced grid files are resolved relative to the
// dataset's directory and loaded eagerly.
Dataset read_dataset(const std::filesystem::path& path);
// Writes records and every referenced grid file (f32 on disk).
void write_dataset(const std::filesystem::path& path, const Dataset& examples);

nlohmann::json example_to_json(const Example& example);

// ---- feature grid files ------------------------------------------------------

// "FGRD" | u32 version | u64 d | u64 N | f32 payload (d x N row-major), little-endian.
inline constexpr std::uint32_t kGridVersion = 1;

std::vector<std::uint8_t> encode_grid(const FeatureGrid& grid);
FeatureGrid decode_grid(std::span<const std::uint8_t> bytes);
void write_grid(const std::filesystem::path& path, const FeatureGrid& grid);
FeatureGrid read_grid(const std::filesystem::path& path);

// ---- vocabularies from data --------------------------------------------------

struct VocabularyPair {
    Vocabulary question;
    Vocabulary answer;
    double answer_coverage = 0.0;  // fraction of examples whose answer is retained
};

VocabularyPair build_vocab(const Dataset& dataset, std::size_t max_answers);

// ---- synthetic data ----------------------------------------------------------

struct SyntheticSpec {
    std::size_t num_examples = 500;
    double val_fraction = 0.2;
    std::size_t grid_side = 2;  // N = grid_side^2
    std::size_t d = 32;
    std::vector<std::string> colors{"red", "green", "blue"};
    std::vector<std::string> shapes{"circle", "square"};
    // counts[i] names the count i + 1
    std::vector<std::string> counts{"one", "two", "three"};
    std::vector<std::string> templates{"what-color-at", "how-many-of", "what-shape-at"};
    double noise = 0.1;
    // Every cell also carries the grid-wide color fractions, like the wide receptive
    // fields of CNN pooling features.
    bool context = true;
    std::uint64_t seed = 7;

    std::size_t locations() const { return grid_side * grid_side; }
    // Attribute blocks: color, shape, row, column, then the color context.
    std::size_t attribute_rows() const {
        return colors.size() + shapes.size() + 2 * grid_side + (context ? colors.size() : 0);
    }
    // Each attribute code is written into a block of this many coordinates.
    std::size_t block_width() const { return d / attribute_rows(); }
    void validate() const;
};

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

struct SyntheticSplits {
    Dataset train;
    Dataset val;
};

// Examples only; grids are inline until written with write_synthetic.
SyntheticSplits generate_synthetic(const SyntheticSpec& spec);
// Writes train.jsonl, val.jsonl, grids/*.fgrd and synth_spec.json under `dir`.
SyntheticSplits write_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir);

// Answers a generated question by decoding attributes from the grid.
std::string rule_answer(const SyntheticSpec& spec, const Example& example);

}  // namespace hcan
