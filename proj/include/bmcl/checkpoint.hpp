#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bmcl/encoders.hpp"
#include "bmcl/error.hpp"
#include "bmcl/hash.hpp"
#include "bmcl/nn.hpp"

namespace bmcl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

// On-disk layout: magic "BMCK1", little-endian u32 manifest byte length, the
// JSON manifest, then each tensor's float32 values column-major in manifest
// order. The manifest carries the architecture, hashes and a parameter digest.
struct Checkpoint {
    nlohmann::json manifest;
    std::vector<std::pair<std::string, Eigen::MatrixXf>> tensors;

    const Eigen::MatrixXf& tensor(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return t;
        throw IntegrityError("checkpoint is missing tensor " + name);
    }

    ModelSpec model_spec() const {
        const auto& a = manifest.at("model");
        ModelSpec spec;
        spec.tab_in = a.at("tab_in").get<int>();
        spec.tab_hidden = a.at("tab_hidden").get<int>();
        spec.tab_embed = a.at("tab_embed").get<int>();
        spec.img_in_c = a.at("img_in_c").get<int>();
        spec.image_size = a.at("image_size").get<int>();
        spec.img_channels = a.at("img_channels").get<std::vector<int>>();
        spec.img_embed = a.at("img_embed").get<int>();
        spec.proj_dim = a.at("proj_dim").get<int>();
        spec.tab_head_bias = a.at("tab_head_bias").get<bool>();
        return spec;
    }

    uint64_t stored_param_digest() const {
        return std::stoull(manifest.at("param_digest").get<std::string>(), nullptr, 16);
    }

    uint64_t compute_param_digest() const {
        Fnv1a h;
        for (const auto& [name, t] : tensors) {
            h.update(name.data(), name.size());
            h.update(t.data(), static_cast<size_t>(t.size()) * sizeof(float));
        }
        return h.digest();
    }
};

template <typename S>
inline Checkpoint make_checkpoint(PretrainModel<S>& model, nlohmann::json extra = {}) {
    Checkpoint ck;
    model.visit([&](Param<S>& p) {
        ck.tensors.emplace_back(p.name, p.value.template cast<float>());
    });

    nlohmann::json m;
    m["format_version"] = 1;
    m["model"] = {{"tab_in", model.spec.tab_in},
                  {"tab_hidden", model.spec.tab_hidden},
                  {"tab_embed", model.spec.tab_embed},
                  {"img_in_c", model.spec.img_in_c},
                  {"image_size", model.spec.image_size},
                  {"img_channels", model.spec.img_channels},
                  {"img_embed", model.spec.img_embed},
                  {"proj_dim", model.spec.proj_dim},
                  {"tab_head_bias", model.spec.tab_head_bias}};
    nlohmann::json tensor_table = nlohmann::json::array();
    for (const auto& [name, t] : ck.tensors) {
        tensor_table.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    }
    m["tensors"] = tensor_table;
    m["param_digest"] = hex64(ck.compute_param_digest());
    if (!extra.is_null()) {
        for (auto& [k, v] : extra.items()) m[k] = v;
    }
    ck.manifest = std::move(m);
    return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IntegrityError("cannot open checkpoint for writing: " + path);
    out.write("BMCK1", 5);
    const std::string manifest = ck.manifest.dump();
    const auto len = static_cast<uint32_t>(manifest.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    for (const auto& [name, t] : ck.tensors) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(static_cast<size_t>(t.size()) * sizeof(float)));
    }
    if (!out) throw IntegrityError("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open checkpoint: " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, "BMCK1", 5) != 0) throw IntegrityError("bad checkpoint magic in " + path);
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    if (!in) throw IntegrityError("checkpoint truncated: " + path);
    std::string manifest_text(len, '\0');
    in.read(manifest_text.data(), static_cast<std::streamsize>(len));
    if (!in) throw IntegrityError("checkpoint truncated: " + path);

    Checkpoint ck;
    try {
        ck.manifest = nlohmann::json::parse(manifest_text);
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(std::string("bad checkpoint manifest: ") + e.what());
    }
    for (const auto& row : ck.manifest.at("tensors")) {
        const auto rows = row.at("rows").get<Eigen::Index>();
        const auto cols = row.at("cols").get<Eigen::Index>();
        Eigen::MatrixXf t(rows, cols);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(static_cast<size_t>(t.size()) * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(static_cast<size_t>(t.size()) * sizeof(float))) {
            throw IntegrityError("checkpoint truncated while reading " + row.at("name").get<std::string>());
        }
        ck.tensors.emplace_back(row.at("name").get<std::string>(), std::move(t));
    }
    if (ck.compute_param_digest() != ck.stored_param_digest()) {
        throw IntegrityError("checkpoint parameter digest mismatch: file corrupted or edited");
    }
    return ck;
}

// Refuses to pair a checkpoint with data it was not trained against.
inline void require_schema_hash(const Checkpoint& ck, uint64_t schema_digest) {
    if (!ck.manifest.contains("schema_hash")) return;
    const std::string want = ck.manifest.at("schema_hash").get<std::string>();
    if (want != hex64(schema_digest)) {
        throw IntegrityError("checkpoint was trained against schema " + want + " but the dataset hashes to " +
                             hex64(schema_digest) + "; refusing to mix them");
    }
}

template <typename S>
inline PretrainModel<S> model_from_checkpoint(const Checkpoint& ck) {
    PretrainModel<S> model(ck.model_spec());
    model.visit([&](Param<S>& p) {
        const Eigen::MatrixXf& t = ck.tensor(p.name);
        if (t.rows() != p.value.rows() || t.cols() != p.value.cols()) {
            throw IntegrityError("checkpoint tensor " + p.name + " has the wrong shape");
        }
        p.value = t.cast<S>();
    });
    return model;
}

}  // namespace bmcl
