#include "strukt/model_io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "strukt/error.hpp"

namespace strukt {
namespace {

using nlohmann::json;

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}
void put_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}
std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}
std::uint64_t get_u64(std::ifstream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

json encoder_to_json(const EncoderConfig& c) {
    return json{{"d_model", c.d_model},
                {"n_backbone_blocks", c.n_backbone_blocks},
                {"n_head_blocks", c.n_head_blocks},
                {"n_heads", c.n_heads},
                {"ff_mult", c.ff_mult},
                {"conv_kernel", c.conv_kernel},
                {"stem_stride", c.stem_stride},
                {"n_classes", c.n_classes},
                {"proj_dim", c.proj_dim},
                {"n_mels", c.n_mels}};
}
EncoderConfig encoder_from_json(const json& j) {
    EncoderConfig c;
    c.d_model = j.at("d_model");
    c.n_backbone_blocks = j.at("n_backbone_blocks");
    c.n_head_blocks = j.at("n_head_blocks");
    c.n_heads = j.at("n_heads");
    c.ff_mult = j.at("ff_mult");
    c.conv_kernel = j.at("conv_kernel");
    c.stem_stride = j.at("stem_stride");
    c.n_classes = j.at("n_classes");
    c.proj_dim = j.at("proj_dim");
    c.n_mels = j.at("n_mels");
    return c;
}

json frontend_to_json(const FrontendConfig& c) {
    return json{{"n_fft", c.n_fft},       {"n_mels", c.n_mels},
                {"base_hop", c.base_hop}, {"ratio_N", c.ratio_N},
                {"sample_rate", c.sample_rate}, {"log_floor", c.log_floor}};
}
FrontendConfig frontend_from_json(const json& j) {
    FrontendConfig c;
    c.n_fft = j.at("n_fft");
    c.n_mels = j.at("n_mels");
    c.base_hop = j.at("base_hop");
    c.ratio_N = j.at("ratio_N");
    c.sample_rate = j.at("sample_rate");
    c.log_floor = j.at("log_floor");
    return c;
}

}  // namespace

LabelVocab ModelBundle::vocab() const {
    LabelVocab v;
    for (const auto& name : vocabulary) v.intern(name);
    return v;
}

void save_model(const std::string& path, const ModelBundle& bundle) {
    json j;
    j["encoder"] = encoder_to_json(bundle.encoder);
    j["frontend"] = frontend_to_json(bundle.frontend);
    j["vocabulary"] = bundle.vocabulary;
    j["mel_mean"] = bundle.mel_mean;
    j["mel_std"] = bundle.mel_std;
    j["init_seed"] = bundle.init_seed;
    const std::string blob = j.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write model file: " + path);
    out.write("STKM", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(blob.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    put_u64(out, bundle.params.size());
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(bundle.params.data()),
              static_cast<std::streamsize>(bundle.params.size() * 8));
    if (!out) throw FormatError("short write on model file: " + path);
}

ModelBundle load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open model file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "STKM", 4) != 0)
        throw FormatError("bad model magic: " + path);
    const std::uint32_t version = get_u32(in);
    if (version != 1) throw FormatError("unsupported model version " + std::to_string(version));
    const std::uint32_t json_len = get_u32(in);
    std::string blob(json_len, '\0');
    in.read(blob.data(), json_len);
    if (!in) throw FormatError("truncated model header: " + path);

    json j;
    try {
        j = json::parse(blob);
    } catch (const json::exception& e) {
        throw FormatError("model JSON block unreadable: " + std::string(e.what()));
    }

    ModelBundle bundle;
    bundle.encoder = encoder_from_json(j.at("encoder"));
    bundle.frontend = frontend_from_json(j.at("frontend"));
    bundle.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    bundle.mel_mean = j.at("mel_mean").get<std::vector<double>>();
    bundle.mel_std = j.at("mel_std").get<std::vector<double>>();
    bundle.init_seed = j.value("init_seed", 0ULL);

    const std::uint64_t count = get_u64(in);
    bundle.params.resize(count);
    in.read(reinterpret_cast<char*>(bundle.params.data()),
            static_cast<std::streamsize>(count * 8));
    if (!in) throw FormatError("truncated model parameters: " + path);
    return bundle;
}

void write_vocabulary(const std::string& path, const std::vector<std::string>& names) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write vocabulary file: " + path);
    for (const auto& name : names) out << name << "\n";
}

}  // namespace strukt
