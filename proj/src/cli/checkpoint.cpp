// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/cli/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "malk/errors.hpp"
#include "malk/linalg/random.hpp"

namespace malk {
namespace {

constexpr char kMagic[4] = {'M', 'A', 'L', 'K'};

template <typename T>
void put(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : b_(bytes) {}

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return v;
    }

    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void need(std::size_t n, const char* what) const {
        if (n > b_.size() - pos_) throw FormatError(std::string("truncated ") + what, pos_);
    }

    std::size_t pos() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return b_.size() - pos_; }

private:
    const std::string& b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
    std::string out(kMagic, 4);
    put<std::uint16_t>(out, kCheckpointVersion);
    const std::string meta = ck.metadata.dump();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
    out += meta;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& [name, m] : ck.tensors) {
        if (name.size() > 0xffff) throw InvalidInput("checkpoint: tensor name too long");
        put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        out.push_back(static_cast<char>(kDtypeF64));
        out.push_back(2);
        put<std::uint64_t>(out, m.rows());
        put<std::uint64_t>(out, m.cols());
        for (double v : m.values()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.bytes(4, "magic") != std::string(kMagic, 4)) throw FormatError("bad magic", 0);
    const std::size_t version_at = r.pos();
    const auto version = r.get<std::uint16_t>("version");
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);

    Checkpoint ck;
    const auto meta_len = r.get<std::uint32_t>("metadata length");
    const std::size_t meta_at = r.pos();
    const std::string meta = r.bytes(meta_len, "metadata");
    try {
        ck.metadata = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("metadata is not valid JSON", meta_at + (e.byte > 0 ? e.byte - 1 : 0));
    }

    const auto count = r.get<std::uint32_t>("tensor count");
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = r.get<std::uint16_t>("tensor name length");
        std::string name = r.bytes(name_len, "tensor name");
        const std::size_t dtype_at = r.pos();
        const auto dtype = r.get<std::uint8_t>("dtype");
        if (dtype != kDtypeF64) throw FormatError("unknown dtype tag " + std::to_string(dtype), dtype_at);
        const std::size_t ndim_at = r.pos();
        const auto ndim = r.get<std::uint8_t>("ndim");
        if (ndim < 1 || ndim > 2) throw FormatError("unsupported ndim " + std::to_string(ndim), ndim_at);
        std::uint64_t dims[2] = {1, 1};
        for (std::uint8_t k = 0; k < ndim; ++k) dims[2 - ndim + k] = r.get<std::uint64_t>("dims");
        const std::size_t payload_at = r.pos();
        if (dims[1] != 0 && dims[0] > r.remaining() / 8 / dims[1])
            throw FormatError("truncated payload of '" + name + "'", payload_at);
        Matrix m(dims[0], dims[1]);
        for (double& v : m.values()) v = std::bit_cast<double>(r.get<std::uint64_t>("payload"));
        ck.tensors.emplace_back(std::move(name), std::move(m));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after tensor table", r.pos());
    return ck;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out.flush()) throw Error("write to '" + tmp + "' failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw Error("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file_atomic(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

Checkpoint snapshot(const RunConfig& cfg, Model& model) {
    Checkpoint ck;
    // Output paths say where this file went, not what is in it.
    nlohmann::json echo = to_json(cfg);
    echo.erase("output");
    ck.metadata["config"] = echo;
    ck.metadata["rng"] = std::string(Rng::kAlgorithm);
    ck.metadata["seeds"] = {{"train", cfg.train.seed}, {"family", cfg.family_seed}, {"mix", cfg.mix_seed}};
    ck.metadata["trainable"] = trainable_count(model);
    for (std::size_t i = 0; i < model.sites(); ++i)
        ck.tensors.emplace_back(Model::site_prefix(i) + ".base_w", model.site(i).base_weight());
    for (const ad::ParamRef& p : model.params()) ck.tensors.emplace_back(p.name, *p.value);
    return ck;
}

std::pair<RunConfig, std::unique_ptr<Model>> restore(const Checkpoint& ck) {
    if (!ck.metadata.is_object() || !ck.metadata.contains("config"))
        throw SchemaError("checkpoint metadata has no config echo");
    if (ck.metadata.value("rng", std::string()) != Rng::kAlgorithm)
        throw SchemaError("checkpoint was written with a different RNG algorithm");
    RunConfig cfg = from_json(ck.metadata.at("config"));

    std::map<std::string, const Matrix*> by_name;
    for (const auto& [name, m] : ck.tensors) {
        if (!by_name.emplace(name, &m).second) throw SchemaError("duplicate tensor '" + name + "'");
    }
    auto take = [&](const std::string& name, std::size_t rows, std::size_t cols) -> const Matrix& {
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw SchemaError("checkpoint is missing tensor '" + name + "'");
        const Matrix& m = *it->second;
        if (m.rows() != rows || m.cols() != cols) {
            throw SchemaError("tensor '" + name + "' is " + m.shape() + ", config expects " + std::to_string(rows) +
                              "x" + std::to_string(cols));
        }
        by_name.erase(it);
        return m;
    };

    const Backbone& bb = cfg.train.model.backbone;
    std::vector<Matrix> base;
    for (std::size_t i = 0; i < bb.sites.size(); ++i)
        base.push_back(take(Model::site_prefix(i) + ".base_w", bb.sites[i].out, bb.sites[i].in));
    auto model = std::make_unique<Model>(cfg.train.model, std::move(base), cfg.train.seed);
    for (const ad::ParamRef& p : model->params()) *p.value = take(p.name, p.value->rows(), p.value->cols());
    if (!by_name.empty()) throw SchemaError("unexpected tensor '" + by_name.begin()->first + "'");
    return {std::move(cfg), std::move(model)};
}

}  // namespace malk
