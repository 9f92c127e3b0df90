#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "petnet/network.hpp"

namespace petnet::network {

namespace {

uint32_t crc32(const uint8_t* data, size_t len) {
    static uint32_t table[256];
    static bool ready = false;
    if (!ready) {
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        ready = true;
    }
    uint32_t c = 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 24));
}

void put_f64(std::vector<uint8_t>& out, double d) {
    uint64_t v = std::bit_cast<uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Reader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw FormatError("model file truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = static_cast<uint32_t>(buf[pos]) | static_cast<uint32_t>(buf[pos + 1]) << 8 |
                     static_cast<uint32_t>(buf[pos + 2]) << 16 |
                     static_cast<uint32_t>(buf[pos + 3]) << 24;
        pos += 4;
        return v;
    }
    double f64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return std::bit_cast<double>(v);
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

void put_named_tensor(std::vector<uint8_t>& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<uint32_t>(t.shape().rank()));
    for (int64_t a = 0; a < t.shape().rank(); ++a) {
        put_u32(out, static_cast<uint32_t>(t.shape()[a]));
    }
    for (int64_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
}

// Canonical flat view of a model's parameter banks, node order, fixed
// per-bank field order.
std::vector<std::pair<std::string, Tensor*>> named_tensors(Model& model) {
    std::vector<std::pair<std::string, Tensor*>> list;
    for (size_t i = 0; i < model.nodes.size(); ++i) {
        const std::string& name = model.nodes[i].name;
        if (auto* f = std::get_if<layers::FilterBank>(&model.params[i])) {
            list.emplace_back(name + ".weights", &f->weights);
            list.emplace_back(name + ".bias", &f->bias);
        } else if (auto* fc = std::get_if<layers::FcParams>(&model.params[i])) {
            list.emplace_back(name + ".weights", &fc->weights);
            list.emplace_back(name + ".bias", &fc->bias);
        } else if (auto* bn = std::get_if<layers::BnParams>(&model.params[i])) {
            list.emplace_back(name + ".scale", &bn->scale);
            list.emplace_back(name + ".offset", &bn->offset);
            list.emplace_back(name + ".running_mean", &bn->running_mean);
            list.emplace_back(name + ".running_var", &bn->running_var);
        }
    }
    return list;
}

constexpr uint32_t kFormatVersion = 1;

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
    if (model.arch_text.empty()) {
        throw UsageError("save_model: model has no architecture metadata");
    }
    std::vector<uint8_t> out;
    out.insert(out.end(), {'P', 'N', 'M', '1'});
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<uint32_t>(model.arch_text.size()));
    out.insert(out.end(), model.arch_text.begin(), model.arch_text.end());
    Model& m = const_cast<Model&>(model);  // named_tensors needs mutable access; values untouched
    for (const auto& [name, tensor] : named_tensors(m)) {
        put_named_tensor(out, name, *tensor);
    }
    put_u32(out, crc32(out.data(), out.size()));

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw FormatError("cannot write model file " + path.string());
        f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
        if (!f) throw FormatError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open model file " + path.string());
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 12) throw FormatError("model file too short");

    uint32_t stored = static_cast<uint32_t>(buf[buf.size() - 4]) |
                      static_cast<uint32_t>(buf[buf.size() - 3]) << 8 |
                      static_cast<uint32_t>(buf[buf.size() - 2]) << 16 |
                      static_cast<uint32_t>(buf[buf.size() - 1]) << 24;
    if (crc32(buf.data(), buf.size() - 4) != stored) {
        throw FormatError("model file checksum mismatch (corrupted or truncated)");
    }

    Reader r{buf};
    if (r.str(4) != "PNM1") throw FormatError("bad magic, not a PNM1 model file");
    uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw FormatError("unsupported model format version " + std::to_string(version) +
                          " (supported: " + std::to_string(kFormatVersion) + ")");
    }
    uint32_t meta_len = r.u32();
    std::string meta = r.str(meta_len);

    Model model = model_from_arch_text(meta);
    model.arch_text = meta;

    for (auto& [name, tensor] : named_tensors(model)) {
        uint32_t name_len = r.u32();
        std::string got = r.str(name_len);
        if (got != name) {
            throw FormatError("model file parameter '" + got + "' does not match expected '" +
                              name + "'");
        }
        uint32_t rank = r.u32();
        std::vector<int64_t> dims(rank);
        for (uint32_t a = 0; a < rank; ++a) dims[a] = r.u32();
        Shape shape{dims};
        if (shape != tensor->shape()) {
            throw FormatError("model file parameter '" + name + "' has shape " + shape.str() +
                              ", architecture expects " + tensor->shape().str());
        }
        for (int64_t i = 0; i < tensor->size(); ++i) (*tensor)[i] = r.f64();
    }
    if (r.pos != buf.size() - 4) {
        throw FormatError("model file has trailing bytes");
    }
    return model;
}

}  // namespace petnet::network
