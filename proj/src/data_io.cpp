#include "hcan/data_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "hcan/checkpoint.hpp"
#include "hcan/errors.hpp"

namespace hcan {

namespace fs = std::filesystem;

// ---- vocabulary ---------------------------------------------------------------

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, bool reserve_special) {
    Vocabulary v;
    v.reserved_ = reserve_special;
    if (reserve_special && (tokens.size() < 2 || tokens[0] != kPad || tokens[1] != kUnk)) {
        throw FormatError("vocabulary must start with the reserved <pad> and <unk> tokens");
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!v.index_.emplace(tokens[i], i).second) throw FormatError("duplicate vocabulary token '" + tokens[i] + "'");
    }
    v.tokens_ = std::move(tokens);
    return v;
}

Vocabulary Vocabulary::build(const std::map<std::string, std::size_t>& counts, bool reserve_special,
                             std::optional<std::size_t> max_size) {
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (const auto& [tok, n] : counts) {
        if (reserve_special && (tok == kPad || tok == kUnk)) continue;
        ranked.emplace_back(tok, n);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (max_size && ranked.size() > *max_size) ranked.resize(*max_size);
    std::vector<std::string> tokens;
    if (reserve_special) tokens = {kPad, kUnk};
    for (auto& [tok, n] : ranked) tokens.push_back(tok);
    return from_tokens(std::move(tokens), reserve_special);
}

std::optional<std::size_t> Vocabulary::find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t Vocabulary::id(const std::string& token) const {
    if (auto i = find(token)) return *i;
    if (reserved_) return 1;
    throw IndexError("token '" + token + "' is not in the vocabulary");
}

void Vocabulary::save(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw PathError("cannot write '" + path.string() + "'");
    for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const fs::path& path, bool reserve_special) {
    std::ifstream in(path);
    if (!in) throw PathError("cannot open vocabulary '" + path.string() + "'");
    std::vector<std::string> tokens;
    for (std::string line; std::getline(in, line);) tokens.push_back(line);
    return from_tokens(std::move(tokens), reserve_special);
}

// ---- grids ----------------------------------------------------------------------

std::vector<std::uint8_t> encode_grid(const FeatureGrid& grid) {
    std::vector<std::uint8_t> out{'F', 'G', 'R', 'D'};
    le::put_u32(out, kGridVersion);
    le::put_u64(out, grid.dim());
    le::put_u64(out, grid.locations());
    for (double v : grid.features.data()) le::put_f32(out, static_cast<float>(v));
    return out;
}

FeatureGrid decode_grid(std::span<const std::uint8_t> bytes) {
    le::Reader r(bytes, "feature grid");
    auto magic = r.take(4);
    if (std::memcmp(magic.data(), "FGRD", 4) != 0) throw FormatError("feature grid: corrupt file, bad magic");
    const auto version = r.u32();
    if (version != kGridVersion) throw FormatError("feature grid: unsupported version " + std::to_string(version));
    const auto d = r.u64();
    const auto n = r.u64();
    if (d == 0 || n == 0) throw FormatError("feature grid: corrupt header, zero extent");
    if (r.remaining() != d * n * 4) {
        throw FormatError("feature grid: corrupt length, payload has " + std::to_string(r.remaining()) +
                          " bytes, expected " + std::to_string(d * n * 4));
    }
    Tensor t({d, n});
    for (auto& v : t.data()) v = static_cast<double>(r.f32());
    return FeatureGrid(std::move(t));
}

void write_grid(const fs::path& path, const FeatureGrid& grid) { write_file_bytes(path, encode_grid(grid)); }

FeatureGrid read_grid(const fs::path& path) {
    if (!fs::exists(path)) throw PathError("grid file not found: '" + path.string() + "'");
    return decode_grid(read_file_bytes(path));
}

// ---- datasets -------------------------------------------------------------------

bool operator==(const Example& a, const Example& b) {
    return a.id == b.id && a.question == b.question && a.grid_ref == b.grid_ref &&
           a.grid.features == b.grid.features && a.answer == b.answer && a.question_type == b.question_type &&
           a.planted == b.planted;
}

nlohmann::json example_to_json(const Example& e) {
    nlohmann::json j;
    j["id"] = e.id;
    j["question"] = e.question;
    if (e.grid_ref.empty()) {
        j["grid"] = {{"d", e.grid.dim()}, {"n", e.grid.locations()}, {"values", e.grid.features.storage()}};
    } else {
        j["grid"] = e.grid_ref;
    }
    j["answer"] = e.answer;
    if (!e.question_type.empty()) j["type"] = e.question_type;
    if (e.planted) {
        nlohmann::json p = nlohmann::json::object();
        if (e.planted->target_cell) p["target_cell"] = *e.planted->target_cell;
        if (e.planted->key_span) p["key_span"] = {e.planted->key_span->first, e.planted->key_span->second};
        j["planted"] = p;
    }
    return j;
}

namespace {

Example example_from_json(const nlohmann::json& j, const fs::path& base, std::size_t line) {
    const std::string where = "line " + std::to_string(line);
    if (!j.is_object()) throw FormatError(where + ": record is not a JSON object");
    for (const char* field : {"question", "grid", "answer"}) {
        if (!j.contains(field)) throw FormatError(where + ": missing field '" + std::string(field) + "'");
    }
    Example e;
    try {
        e.id = j.value("id", "line-" + std::to_string(line));
        e.question = j.at("question").get<std::vector<std::string>>();
        e.answer = j.at("answer").get<std::string>();
        e.question_type = j.value("type", std::string());
        const auto& grid = j.at("grid");
        if (grid.is_string()) {
            e.grid_ref = grid.get<std::string>();
        } else {
            const auto d = grid.at("d").get<std::size_t>();
            const auto n = grid.at("n").get<std::size_t>();
            auto values = grid.at("values").get<std::vector<double>>();
            if (d == 0 || n == 0 || values.size() != d * n) throw FormatError(where + ": inline grid size mismatch");
            e.grid = FeatureGrid(Tensor({d, n}, std::move(values)));
        }
        if (j.contains("planted")) {
            Planted p;
            const auto& pj = j.at("planted");
            if (pj.contains("target_cell")) p.target_cell = pj.at("target_cell").get<std::size_t>();
            if (pj.contains("key_span")) {
                auto span = pj.at("key_span").get<std::vector<std::size_t>>();
                if (span.size() != 2) throw FormatError(where + ": key_span must have two entries");
                p.key_span = std::make_pair(span[0], span[1]);
            }
            e.planted = p;
        }
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(where + ": " + ex.what());
    }
    if (e.question.empty()) throw FormatError(where + ": question has no tokens");
    if (!e.grid_ref.empty()) e.grid = read_grid(base / e.grid_ref);
    return e;
}

}  // namespace

Dataset read_dataset(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw PathError("cannot open dataset '" + path.string() + "'");
    const fs::path base = path.parent_path();
    Dataset out;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError("line " + std::to_string(line_no) + ": malformed JSON: " + ex.what());
        }
        out.push_back(example_from_json(j, base, line_no));
        const auto& first = out.front().grid;
        const auto& cur = out.back().grid;
        if (cur.dim() != first.dim() || cur.locations() != first.locations()) {
            throw FormatError("line " + std::to_string(line_no) + ": grid " + cur.features.shape_str() +
                              " differs from the dataset's " + first.features.shape_str());
        }
    }
    return out;
}

void write_dataset(const fs::path& path, const Dataset& examples) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw PathError("cannot write dataset '" + path.string() + "'");
    for (const auto& e : examples) {
        if (!e.grid_ref.empty()) write_grid(path.parent_path() / e.grid_ref, e.grid);
        out << example_to_json(e).dump() << '\n';
    }
}

// ---- vocabularies -----------------------------------------------------------------

VocabularyPair build_vocab(const Dataset& dataset, std::size_t max_answers) {
    if (dataset.empty()) throw ParameterError("cannot build vocabularies from an empty dataset");
    if (max_answers == 0) throw ConfigError("max_answers must be at least 1");
    std::map<std::string, std::size_t> words, answers;
    for (const auto& e : dataset) {
        for (const auto& w : e.question) ++words[w];
        ++answers[e.answer];
    }
    VocabularyPair out;
    out.question = Vocabulary::build(words, true);
    out.answer = Vocabulary::build(answers, false, max_answers);
    std::size_t covered = 0;
    for (const auto& e : dataset) covered += out.answer.find(e.answer).has_value() ? 1 : 0;
    out.answer_coverage = static_cast<double>(covered) / static_cast<double>(dataset.size());
    return out;
}

// ---- synthetic data -----------------------------------------------------------------

void SyntheticSpec::validate() const {
    if (grid_side == 0) throw ConfigError("synthetic: grid side must be at least 1");
    if (colors.empty() || shapes.empty() || counts.empty()) throw ConfigError("synthetic: attribute alphabets must be non-empty");
    if (templates.empty()) throw ConfigError("synthetic: at least one question template is required");
    if (std::find(templates.begin(), templates.end(), "how-many-of") != templates.end() && colors.size() < 2) {
        throw ConfigError("synthetic: how-many-of needs at least two colors");
    }
    for (const auto& t : templates) {
        if (t != "what-color-at" && t != "how-many-of" && t != "what-shape-at") {
            throw ConfigError("synthetic: unknown question template '" + t + "'");
        }
    }
    if (d < attribute_rows()) {
        throw ConfigError("synthetic: d = " + std::to_string(d) + " is too small for the attribute blocks (needs " +
                          std::to_string(attribute_rows()) + ")");
    }
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("synthetic: val_fraction must lie in [0, 1)");
    if (!(noise >= 0.0)) throw ConfigError("synthetic: noise must be non-negative");
    std::set<std::string> answers;
    for (const auto* alphabet : {&colors, &shapes, &counts})
        for (const auto& a : *alphabet)
            if (!answers.insert(a).second) throw ConfigError("synthetic: attribute word '" + a + "' is used twice");
}

nlohmann::json to_json(const SyntheticSpec& s) {
    return {{"num_examples", s.num_examples}, {"val_fraction", s.val_fraction}, {"grid_side", s.grid_side},
            {"d", s.d},                       {"colors", s.colors},             {"shapes", s.shapes},
            {"counts", s.counts},             {"templates", s.templates},       {"noise", s.noise},
            {"context", s.context},           {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    try {
        s.num_examples = j.value("num_examples", s.num_examples);
        s.val_fraction = j.value("val_fraction", s.val_fraction);
        s.grid_side = j.value("grid_side", s.grid_side);
        s.d = j.value("d", s.d);
        s.colors = j.value("colors", s.colors);
        s.shapes = j.value("shapes", s.shapes);
        s.counts = j.value("counts", s.counts);
        s.templates = j.value("templates", s.templates);
        s.noise = j.value("noise", s.noise);
        s.context = j.value("context", s.context);
        s.seed = j.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synthetic spec: ") + e.what());
    }
    return s;
}

namespace {

struct Cell {
    std::size_t color;
    std::size_t shape;
};

std::string row_token(std::size_t r) { return "row" + std::to_string(r); }
std::string col_token(std::size_t c) { return "col" + std::to_string(c); }

// Which of `count` consecutive attribute blocks (starting at block `begin`) has the largest sum.
std::size_t block_argmax(const FeatureGrid& grid, std::size_t cell, std::size_t begin, std::size_t count,
                         std::size_t width) {
    auto block_sum = [&](std::size_t block) {
        double s = 0.0;
        for (std::size_t i = 0; i < width; ++i) s += grid.features((begin + block) * width + i, cell);
        return s;
    };
    std::size_t best = 0;
    for (std::size_t i = 1; i < count; ++i)
        if (block_sum(i) > block_sum(best)) best = i;
    return best;
}

std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

}  // namespace

SyntheticSplits generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise);
    const std::size_t g = spec.grid_side, N = spec.locations();
    const std::size_t C = spec.colors.size(), S = spec.shapes.size();
    const std::size_t color_at = 0, shape_at = C, row_at = C + S, col_at = C + S + g;
    const std::size_t w = spec.block_width();
    const auto num_val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(spec.num_examples)));
    const std::size_t num_train = spec.num_examples - num_val;

    SyntheticSplits out;
    for (std::size_t idx = 0; idx < spec.num_examples; ++idx) {
        const bool is_train = idx < num_train;
        Example e;
        e.id = (is_train ? "train-" : "val-") + std::to_string(is_train ? idx : idx - num_train);
        e.question_type = spec.templates[pick(rng, spec.templates.size())];

        std::vector<Cell> cells(N);
        for (auto& c : cells) c = {pick(rng, C), pick(rng, S)};
        // Count questions: pick the color and its count first, then place exactly that many matching cells.
        std::size_t count_color = 0, count_n = 0;
        if (e.question_type == "how-many-of") {
            count_color = pick(rng, C);
            count_n = 1 + pick(rng, std::min(spec.counts.size(), N));
            std::vector<std::size_t> order(N);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t i = 0; i < N; ++i) {
                std::size_t other = pick(rng, C - 1);
                if (other >= count_color) ++other;
                cells[order[i]].color = i < count_n ? count_color : other;
            }
        }

        Tensor v({spec.d, N});
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t i = 0; i < spec.d; ++i) v(i, n) = noise(rng);
            for (std::size_t block : {color_at + cells[n].color, shape_at + cells[n].shape, row_at + n / g, col_at + n % g})
                for (std::size_t i = 0; i < w; ++i) v(block * w + i, n) += 1.0;
        }
        if (spec.context) {
            const std::size_t context_at = col_at + g;
            for (const auto& cell : cells)
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t i = 0; i < w; ++i) v((context_at + cell.color) * w + i, n) += 1.0 / static_cast<double>(N);
        }
        e.grid = FeatureGrid(std::move(v));

        Planted planted;
        if (e.question_type == "how-many-of") {
            e.question = {"how", "many", spec.colors[count_color], "objects"};
            e.answer = spec.counts[count_n - 1];
            planted.key_span = std::make_pair(std::size_t{2}, std::size_t{2});
        } else {
            const std::size_t target = pick(rng, N);
            const bool color = e.question_type == "what-color-at";
            e.question = {"what", color ? "color" : "shape", "is", "at", row_token(target / g), col_token(target % g)};
            e.answer = color ? spec.colors[cells[target].color] : spec.shapes[cells[target].shape];
            planted.target_cell = target;
            planted.key_span = std::make_pair(std::size_t{4}, std::size_t{5});
        }
        e.planted = planted;
        (is_train ? out.train : out.val).push_back(std::move(e));
    }
    return out;
}

SyntheticSplits write_synthetic(const SyntheticSpec& spec, const fs::path& dir) {
    SyntheticSplits splits = generate_synthetic(spec);
    for (auto* split : {&splits.train, &splits.val}) {
        for (auto& e : *split) {
            e.grid_ref = "grids/" + e.id + ".fgrd";
            e.grid = decode_grid(encode_grid(e.grid));  // stored precision
        }
    }
    fs::create_directories(dir);
    write_dataset(dir / "train.jsonl", splits.train);
    write_dataset(dir / "val.jsonl", splits.val);
    std::ofstream meta(dir / "synth_spec.json", std::ios::trunc);
    if (!meta) throw PathError("cannot write '" + (dir / "synth_spec.json").string() + "'");
    meta << to_json(spec).dump(2) << '\n';
    return splits;
}

std::string rule_answer(const SyntheticSpec& spec, const Example& e) {
    const std::size_t g = spec.grid_side, N = spec.locations();
    const std::size_t C = spec.colors.size(), S = spec.shapes.size();
    if (e.grid.locations() != N || e.grid.dim() < spec.attribute_rows()) {
        throw DimensionError("rule_answer: grid does not match the synthetic layout");
    }
    auto find_in = [](const std::vector<std::string>& alphabet, const std::string& w) -> std::optional<std::size_t> {
        auto it = std::find(alphabet.begin(), alphabet.end(), w);
        if (it == alphabet.end()) return std::nullopt;
        return static_cast<std::size_t>(it - alphabet.begin());
    };
    const std::size_t w = spec.block_width();
    const auto& q = e.question;
    if (q.size() == 4 && q[0] == "how" && q[1] == "many") {
        const auto color = find_in(spec.colors, q[2]);
        const auto shape = find_in(spec.shapes, q[2]);
        std::size_t n = 0;
        for (std::size_t cell = 0; cell < N; ++cell) {
            if (color && block_argmax(e.grid, cell, 0, C, w) == *color) ++n;
            if (shape && block_argmax(e.grid, cell, C, S, w) == *shape) ++n;
        }
        if (n == 0 || n > spec.counts.size()) throw ParameterError("rule_answer: count not expressible");
        return spec.counts[n - 1];
    }
    if (q.size() == 6 && q[0] == "what" && q[3] == "at") {
        std::size_t target = N;
        for (std::size_t cell = 0; cell < N; ++cell) {
            if (row_token(cell / g) == q[4] && col_token(cell % g) == q[5]) target = cell;
        }
        if (target == N) throw ParameterError("rule_answer: unknown location in question");
        // Locate the cell from its row/column feature blocks, not from its index.
        std::size_t located = N;
        for (std::size_t cell = 0; cell < N; ++cell) {
            if (block_argmax(e.grid, cell, C + S, g, w) == target / g && block_argmax(e.grid, cell, C + S + g, g, w) == target % g) {
                located = cell;
            }
        }
        if (located == N) throw ParameterError("rule_answer: no cell carries the requested location");
        if (q[1] == "color") return spec.colors[block_argmax(e.grid, located, 0, C, w)];
        if (q[1] == "shape") return spec.shapes[block_argmax(e.grid, located, C, S, w)];
    }
    throw ParameterError("rule_answer: question does not follow a known template");
}

}  // namespace hcan
