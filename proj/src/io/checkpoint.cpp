#include "crosslag/io/checkpoint.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "crosslag/errors.hpp"

namespace crosslag {

nlohmann::ordered_json Checkpoint::to_json() const {
    nlohmann::ordered_json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["model_config"] = config.to_json();
    j["target"] = target_name;
    j["features"] = features;
    j["norm_stats"] = stats.to_json();
    auto& arrays = j["params"] = nlohmann::ordered_json::object();
    for (const auto& p : params.named()) {
        arrays[p.name] = {{"shape", p.var.shape()}, {"data", p.var.value().storage()}};
    }
    return j;
}

Checkpoint Checkpoint::from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != kCheckpointFormat) throw CompatibilityError("not a crosslag checkpoint");
    if (!j.contains("version") || j.at("version").get<int>() != kCheckpointVersion) {
        throw CompatibilityError("unsupported checkpoint version");
    }
    Checkpoint c;
    try {
        c.config = ModelConfig::from_json(j.at("model_config"));
        c.target_name = j.at("target").get<std::string>();
        c.features = j.at("features").get<std::vector<std::string>>();
        c.stats = NormStats::from_json(j.at("norm_stats"));
        c.params = init_model(c.config, 0);
        const auto& arrays = j.at("params");
        for (auto& p : c.params.named()) {
            if (!arrays.contains(p.name)) throw CompatibilityError("checkpoint is missing parameter '" + p.name + "'");
            const auto& a = arrays.at(p.name);
            Tensor t(a.at("shape").get<Shape>(), a.at("data").get<std::vector<double>>());
            if (t.shape() != p.var.shape()) {
                throw CompatibilityError("parameter '" + p.name + "' has shape " + shape_str(t.shape()) +
                                         ", config implies " + shape_str(p.var.shape()));
            }
            p.var.leaf_value() = std::move(t);
        }
    } catch (const nlohmann::json::exception& e) {
        throw CompatibilityError(std::string("malformed checkpoint: ") + e.what());
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
    out << ckpt.to_json().dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CompatibilityError("cannot open checkpoint '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CompatibilityError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return Checkpoint::from_json(j);
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

}  // namespace crosslag
