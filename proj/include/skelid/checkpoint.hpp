#pragma once

// Binary model snapshots. A checkpoint is a config string (JSON describing
// how to rebuild the model) plus name-sorted tensors, serialized to a fixed
// little-endian layout so identical state produces identical bytes:
//
//   magic   8 bytes  "SKIDCKP1"
//   version u32
//   config  u64 byte length + UTF-8 bytes
//   count   u64
//   entry   u64 name length + name bytes,
//           u64 rank + rank x u64 dims,
//           numel x f64 values
//
// Entries are strictly ascending by name; the parser rejects disorder,
// duplicates, and trailing bytes, so bytes and in-memory form are bijective.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "skelid/common.hpp"
#include "skelid/layers.hpp"
#include "skelid/tensor.hpp"

namespace skelid {

inline constexpr const char kCheckpointMagic[9] = "SKIDCKP1";  // 8 bytes on the wire
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint64_t kCheckpointMaxRank = 8;

struct CheckpointEntry {
    std::string name;
    Tensor tensor;
    CheckpointEntry(std::string n, Tensor t) : name(std::move(n)), tensor(std::move(t)) {}
};

struct Checkpoint {
    std::string config_json;
    std::vector<CheckpointEntry> entries;  // strictly ascending by name

    const Tensor* find(const std::string& name) const {
        auto it = std::lower_bound(entries.begin(), entries.end(), name,
                                   [](const CheckpointEntry& e, const std::string& n) { return e.name < n; });
        if (it == entries.end() || it->name != name) return nullptr;
        return &it->tensor;
    }
};

// Copies live model state into a checkpoint, sorting by name and rejecting
// duplicate names.
inline Checkpoint capture_checkpoint(std::string config_json, const StateDict& state) {
    Checkpoint out;
    out.config_json = std::move(config_json);
    out.entries.reserve(state.size());
    for (const auto& item : state) out.entries.emplace_back(item.name, *item.tensor);
    std::sort(out.entries.begin(), out.entries.end(),
              [](const CheckpointEntry& a, const CheckpointEntry& b) { return a.name < b.name; });
    for (std::size_t i = 1; i < out.entries.size(); ++i)
        if (out.entries[i - 1].name == out.entries[i].name)
            throw ValidationError("duplicate parameter name \"" + out.entries[i].name + "\"");
    return out;
}

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
    for (std::size_t i = 1; i < ckpt.entries.size(); ++i)
        if (!(ckpt.entries[i - 1].name < ckpt.entries[i].name))
            throw ValidationError("checkpoint entries must be strictly ascending by name; \"" +
                                  ckpt.entries[i - 1].name + "\" precedes \"" + ckpt.entries[i].name + "\"");
    std::string out;
    out.append(kCheckpointMagic, 8);
    put_u32le(out, kCheckpointVersion);
    put_u64le(out, ckpt.config_json.size());
    out += ckpt.config_json;
    put_u64le(out, ckpt.entries.size());
    for (const auto& entry : ckpt.entries) {
        put_u64le(out, entry.name.size());
        out += entry.name;
        const Shape& shape = entry.tensor.shape();
        put_u64le(out, shape.size());
        for (std::int64_t d : shape) put_u64le(out, static_cast<std::uint64_t>(d));
        for (std::int64_t j = 0; j < entry.tensor.numel(); ++j) put_f64le(out, entry.tensor[j]);
    }
    return out;
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
    if (bytes.size() < 8 || bytes.compare(0, 8, kCheckpointMagic, 8) != 0)
        throw SchemaError("not a checkpoint: bad magic header (expected \"" + std::string(kCheckpointMagic) +
                          "\")");
    ByteReader reader(bytes, "checkpoint");
    reader.bytes(8);  // magic, already verified
    const std::uint32_t version = reader.u32();
    if (version != kCheckpointVersion)
        throw SchemaError("unsupported checkpoint version " + std::to_string(version) +
                          " (this build reads version " + std::to_string(kCheckpointVersion) + ")");

    Checkpoint out;
    const std::uint64_t config_len = reader.u64();
    if (config_len > bytes.size()) throw ValidationError("checkpoint: truncated (config length overruns file)");
    out.config_json = reader.bytes(static_cast<std::size_t>(config_len));

    const std::uint64_t count = reader.u64();
    if (count > bytes.size()) throw ValidationError("checkpoint: truncated (entry count overruns file)");
    out.entries.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t name_len = reader.u64();
        if (name_len > bytes.size()) throw ValidationError("checkpoint: truncated (name length overruns file)");
        std::string name = reader.bytes(static_cast<std::size_t>(name_len));
        if (name.empty()) throw SchemaError("checkpoint entry " + std::to_string(i) + " has an empty name");
        if (!out.entries.empty() && !(out.entries.back().name < name))
            throw SchemaError("checkpoint entries out of order: \"" + out.entries.back().name +
                              "\" precedes \"" + name + "\"");
        const std::uint64_t rank = reader.u64();
        if (rank > kCheckpointMaxRank)
            throw SchemaError("checkpoint entry \"" + name + "\" has rank " + std::to_string(rank) +
                              ", limit is " + std::to_string(kCheckpointMaxRank));
        Shape shape;
        std::uint64_t numel = 1;
        for (std::uint64_t d = 0; d < rank; ++d) {
            const std::uint64_t dim = reader.u64();
            if (dim == 0 || dim > (1ull << 32))
                throw SchemaError("checkpoint entry \"" + name + "\" has invalid dimension " +
                                  std::to_string(dim));
            numel *= dim;
            if (numel > (1ull << 32))
                throw SchemaError("checkpoint entry \"" + name + "\" is implausibly large");
            shape.push_back(static_cast<std::int64_t>(dim));
        }
        Tensor tensor{shape};
        for (std::int64_t j = 0; j < tensor.numel(); ++j) tensor[j] = reader.f64();
        out.entries.emplace_back(std::move(name), std::move(tensor));
    }
    if (!reader.at_end())
        throw SchemaError("checkpoint has " + std::to_string(bytes.size() - reader.pos()) +
                          " trailing bytes after the last entry");
    return out;
}

inline void save_checkpoint_file(const std::filesystem::path& path, const Checkpoint& ckpt) {
    atomic_write_file(path, serialize_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint_file(const std::filesystem::path& path) {
    return parse_checkpoint(read_file_bytes(path));
}

// Copies checkpoint tensors into live model state. Every state entry must be
// present with a matching shape; by default the checkpoint must not contain
// anything else, so loading the wrong model's checkpoint fails loudly.
inline void restore_state(const Checkpoint& ckpt, StateDict& state, bool allow_extra = false) {
    std::size_t used = 0;
    for (auto& item : state) {
        const Tensor* stored = ckpt.find(item.name);
        if (stored == nullptr)
            throw SchemaError("checkpoint is missing parameter \"" + item.name + "\"");
        if (stored->shape() != item.tensor->shape())
            throw ShapeError("checkpoint parameter \"" + item.name + "\" has shape " +
                             shape_str(stored->shape()) + " but the model expects " +
                             shape_str(item.tensor->shape()));
        *item.tensor = *stored;
        ++used;
    }
    if (!allow_extra && used != ckpt.entries.size()) {
        for (const auto& entry : ckpt.entries) {
            bool wanted = false;
            for (const auto& item : state)
                if (item.name == entry.name) {
                    wanted = true;
                    break;
                }
            if (!wanted)
                throw SchemaError("checkpoint contains unexpected parameter \"" + entry.name + "\"");
        }
    }
}

}  // namespace skelid
