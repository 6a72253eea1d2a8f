#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hcan/model.hpp"
#include "hcan/params.hpp"
#include "json.hpp"

namespace hcan {

// Layout (all integers little-endian):
//   "HCAN" | u32 version | u64 config length | config JSON (canonical, UTF-8)
//   | u64 tensor count | per tensor: u32 name length, name, u32 rank,
//   u64 extents[rank], f64 payload[product(extents)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    nlohmann::json config = nlohmann::json::object();
    ParamStore tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Model tensors of a checkpoint validated against `config`. Tensors whose names
// start with `ignored_prefix` (optimizer state) are skipped.
ParamStore model_params_from(const Checkpoint& checkpoint, const ModelConfig& config,
                             const std::string& ignored_prefix = "rmsprop.");

// Raw little-endian byte helpers shared with the grid format.
namespace le {
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
void put_f32(std::vector<std::uint8_t>& out, float v);

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}
    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    float f32();
    std::span<const std::uint8_t> take(std::size_t n);
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::string what_;
};
}  // namespace le

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace hcan
