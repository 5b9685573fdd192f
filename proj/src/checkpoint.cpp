#include "derain/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "derain/image_io.hpp"
#include "json.hpp"

namespace derain {

namespace {

using nlohmann::json;

constexpr const char* kMagic = "DERAIN-CHECKPOINT 1";

json config_to_json(const ModelConfig& cfg) {
    return json{
        {"base_channels", cfg.base_channels},
        {"encoder_depth", cfg.encoder_depth},
        {"msrb_per_level", cfg.msrb_per_level},
        {"use_multiscale", cfg.use_multiscale},
        {"pool", cfg.pool == PoolKind::Average ? "avg" : "max"},
        {"msrb_scales", cfg.msrb_scales},
        {"guide_dilations", cfg.guide_dilations},
        {"mode", topology_name(cfg.ablation.topology)},
        {"no_dilated_streams", cfg.ablation.no_dilated_streams},
        {"no_physical_loss", cfg.ablation.no_physical_loss},
    };
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.base_channels = j.at("base_channels").get<std::int64_t>();
    cfg.encoder_depth = j.at("encoder_depth").get<std::int64_t>();
    cfg.msrb_per_level = j.at("msrb_per_level").get<std::int64_t>();
    cfg.use_multiscale = j.at("use_multiscale").get<bool>();
    const std::string pool = j.at("pool").get<std::string>();
    if (pool != "avg" && pool != "max") throw std::invalid_argument("unknown pool kind " + pool);
    cfg.pool = pool == "avg" ? PoolKind::Average : PoolKind::Max;
    cfg.msrb_scales = j.at("msrb_scales").get<std::vector<std::int64_t>>();
    cfg.guide_dilations = j.at("guide_dilations").get<std::vector<std::int64_t>>();
    cfg.ablation.topology = parse_topology(j.at("mode").get<std::string>());
    cfg.ablation.no_dilated_streams = j.at("no_dilated_streams").get<bool>();
    cfg.ablation.no_physical_loss = j.at("no_physical_loss").get<bool>();
    cfg.validate();
    return cfg;
}

struct Blob {
    const Tensor<float>* tensor;
    std::string name;
    std::string role;
};

std::vector<Blob> blobs_of(const ParamStore<float>& params) {
    std::vector<Blob> out;
    for (const auto& p : params) {
        out.push_back({&p->value, p->name, "value"});
        out.push_back({&p->m, p->name, "adam_m"});
        out.push_back({&p->v, p->name, "adam_v"});
    }
    return out;
}

json build_manifest(const Checkpoint& ckpt) {
    json tensors = json::array();
    std::uint64_t offset = 0;
    for (const Blob& b : blobs_of(ckpt.params)) {
        const Shape& s = b.tensor->shape();
        tensors.push_back(json{{"name", b.name},
                               {"role", b.role},
                               {"shape", {s.n, s.c, s.h, s.w}},
                               {"dtype", "f32"},
                               {"offset", offset}});
        offset += static_cast<std::uint64_t>(s.numel()) * 4;
    }
    return json{
        {"format", kMagic},
        {"config", config_to_json(ckpt.config)},
        {"epoch", ckpt.epoch},
        {"adam",
         {{"step", ckpt.adam.step},
          {"beta1", ckpt.adam.beta1},
          {"beta2", ckpt.adam.beta2},
          {"eps", ckpt.adam.eps}}},
        {"tensors", tensors},
        {"blob_bytes", offset},
    };
}

void write_le_floats(std::ostream& os, const Tensor<float>& t) {
    std::vector<char> bytes(static_cast<std::size_t>(t.numel()) * 4);
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        std::uint32_t u = std::bit_cast<std::uint32_t>(t[i]);
        for (int k = 0; k < 4; ++k) bytes[i * 4 + k] = static_cast<char>((u >> (8 * k)) & 0xFF);
    }
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void read_le_floats(const std::string& blob, std::uint64_t offset, Tensor<float>& t) {
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        std::uint32_t u = 0;
        for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(p[i * 4 + k]) << (8 * k);
        t[i] = std::bit_cast<float>(u);
    }
}

}  // namespace

std::string model_config_json(const ModelConfig& cfg) {
    return config_to_json(cfg).dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    return config_from_json(json::parse(text));
}

std::string checkpoint_manifest(const Checkpoint& ckpt) {
    return build_manifest(ckpt).dump(2);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const std::string manifest = checkpoint_manifest(ckpt);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + path.string());
    os << kMagic << '\n' << manifest.size() << '\n' << manifest;
    for (const Blob& b : blobs_of(ckpt.params)) write_le_floats(os, *b.tensor);
    os.flush();
    if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    std::string magic;
    std::getline(is, magic);
    if (magic != kMagic) throw IoError("not a checkpoint file: " + path.string());
    std::string size_line;
    std::getline(is, size_line);
    std::size_t manifest_size = 0;
    try {
        manifest_size = std::stoull(size_line);
    } catch (const std::exception&) {
        throw IoError("corrupt checkpoint header in " + path.string());
    }
    std::string manifest(manifest_size, '\0');
    is.read(manifest.data(), static_cast<std::streamsize>(manifest_size));
    std::ostringstream rest;
    rest << is.rdbuf();
    const std::string blob = rest.str();

    Checkpoint ckpt;
    try {
        const json j = json::parse(manifest);
        ckpt.config = config_from_json(j.at("config"));
        ckpt.epoch = j.at("epoch").get<std::int64_t>();
        const json& adam = j.at("adam");
        ckpt.adam.step = adam.at("step").get<std::int64_t>();
        ckpt.adam.beta1 = adam.at("beta1").get<double>();
        ckpt.adam.beta2 = adam.at("beta2").get<double>();
        ckpt.adam.eps = adam.at("eps").get<double>();
        if (j.at("blob_bytes").get<std::uint64_t>() != blob.size()) {
            throw IoError("truncated checkpoint " + path.string());
        }
        for (const json& t : j.at("tensors")) {
            const auto dims = t.at("shape").get<std::vector<std::int64_t>>();
            if (dims.size() != 4 || t.at("dtype").get<std::string>() != "f32") {
                throw IoError("unsupported tensor entry in " + path.string());
            }
            Tensor<float> tensor(Shape{dims[0], dims[1], dims[2], dims[3]});
            const auto offset = t.at("offset").get<std::uint64_t>();
            if (offset + static_cast<std::uint64_t>(tensor.numel()) * 4 > blob.size()) {
                throw IoError("tensor blob out of range in " + path.string());
            }
            read_le_floats(blob, offset, tensor);
            const std::string name = t.at("name").get<std::string>();
            const std::string role = t.at("role").get<std::string>();
            if (role == "value") {
                ckpt.params.add(name, std::move(tensor));
            } else {
                Parameter<float>& p = ckpt.params.get(name);
                if (tensor.shape() != p.value.shape()) {
                    throw IoError("optimizer state shape mismatch for " + name + " in " + path.string());
                }
                (role == "adam_m" ? p.m : p.v) = std::move(tensor);
            }
        }
    } catch (const IoError&) {
        throw;
    } catch (const std::exception& e) {
        throw IoError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    return ckpt;
}

}  // namespace derain
