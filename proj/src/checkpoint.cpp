#include "hcan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hcan/errors.hpp"

namespace hcan {

namespace le {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::span<const std::uint8_t> Reader::take(std::size_t n) {
    if (n > remaining()) {
        throw FormatError(what_ + ": corrupt length, needed " + std::to_string(n) + " bytes at offset " +
                          std::to_string(pos_) + " but only " + std::to_string(remaining()) + " remain");
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
}

std::uint32_t Reader::u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
}

std::uint64_t Reader::u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }
float Reader::f32() { return std::bit_cast<float>(u32()); }

}  // namespace le

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PathError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw PathError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw PathError("failed writing '" + path.string() + "'");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    std::vector<std::uint8_t> out{'H', 'C', 'A', 'N'};
    le::put_u32(out, kCheckpointVersion);
    const std::string config = ck.config.dump();
    le::put_u64(out, config.size());
    out.insert(out.end(), config.begin(), config.end());
    le::put_u64(out, ck.tensors.size());
    for (const auto& [name, value] : ck.tensors) {
        le::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        le::put_u32(out, static_cast<std::uint32_t>(value.rank()));
        for (auto e : value.shape()) le::put_u64(out, e);
        for (double v : value.data()) le::put_f64(out, v);
    }
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    le::Reader r(bytes, "checkpoint");
    auto magic = r.take(4);
    if (std::memcmp(magic.data(), "HCAN", 4) != 0) throw FormatError("checkpoint: bad magic, not an HCAN file");
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: version mismatch, file has " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
    }
    Checkpoint ck;
    auto config = r.take(r.u64());
    try {
        ck.config = nlohmann::json::parse(config.begin(), config.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: config blob is not valid JSON: ") + e.what());
    }
    const auto count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        auto name_bytes = r.take(r.u32());
        std::string name(name_bytes.begin(), name_bytes.end());
        const auto rank = r.u32();
        if (rank > 8) throw FormatError("checkpoint: tensor '" + name + "' has implausible rank " + std::to_string(rank));
        Shape shape;
        std::uint64_t count_values = 1;
        for (std::uint32_t a = 0; a < rank; ++a) {
            const auto e = r.u64();
            if (e == 0) throw FormatError("checkpoint: tensor '" + name + "' has a zero extent");
            shape.push_back(e);
            count_values *= e;
        }
        if (count_values > r.remaining() / 8) {
            throw FormatError("checkpoint: corrupt length, tensor '" + name + "' payload is truncated");
        }
        std::vector<double> data(count_values);
        for (auto& v : data) v = r.f64();
        if (ck.tensors.contains(name)) throw FormatError("checkpoint: duplicate tensor '" + name + "'");
        ck.tensors.add(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (r.remaining() != 0) {
        throw FormatError("checkpoint: corrupt length, " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    write_file_bytes(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw PathError("checkpoint not found: '" + path.string() + "'");
    return decode_checkpoint(read_file_bytes(path));
}

ParamStore model_params_from(const Checkpoint& checkpoint, const ModelConfig& config,
                             const std::string& ignored_prefix) {
    ParamStore model;
    for (const auto& [name, value] : checkpoint.tensors) {
        if (!ignored_prefix.empty() && name.rfind(ignored_prefix, 0) == 0) continue;
        model.add(name, value);
    }
    check_params(config, model);
    // Reorder canonically so parameter indices match a fresh init.
    ParamStore ordered;
    for (const auto& [name, shape] : param_shapes(config)) ordered.add(name, model.at(name));
    return ordered;
}

}  // namespace hcan
