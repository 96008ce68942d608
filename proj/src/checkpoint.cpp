#include "ris/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace ris::inline RIS_PRECISION {

namespace {

constexpr char kMagic[8] = {'R', 'I', 'S', 'T', 'E', 'N', 'S', '1'};

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error(path.string() + ": truncated tensor archive");
    return v;
}

}  // namespace

void save_tensors(const std::filesystem::path& path, const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::ostringstream out(std::ios::binary);
    out.write(kMagic, sizeof kMagic);
    put<std::uint64_t>(out, tensors.size());
    for (const auto& [name, t] : tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
        for (int d : t->shape()) put<std::int64_t>(out, d);
        for (Real v : t->values()) put<double>(out, static_cast<double>(v));
    }
    write_text_atomic(path, out.str());
}

TensorMap load_tensors(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw std::runtime_error(path.string() + ": not a tensor archive");
    TensorMap out;
    const auto count = get<std::uint64_t>(in, path);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name(get<std::uint32_t>(in, path), '\0');
        in.read(name.data(), static_cast<std::streamsize>(name.size()));
        Shape shape(get<std::uint32_t>(in, path));
        for (auto& d : shape) d = static_cast<int>(get<std::int64_t>(in, path));
        Tensor t(shape);
        for (auto& v : t.values()) v = static_cast<Real>(get<double>(in, path));
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

void restore_tensors(const TensorMap& from, const std::vector<NamedTensorRef>& into, const std::string& prefix) {
    for (const auto& [name, t] : into) {
        const auto it = from.find(prefix + name);
        if (it == from.end()) throw std::runtime_error("checkpoint lacks tensor '" + prefix + name + "'");
        if (it->second.shape() != t->shape())
            throw std::runtime_error(fmt::format("checkpoint tensor '{}{}' has shape {}, expected {}", prefix, name,
                                                 shape_str(it->second.shape()), shape_str(t->shape())));
        *t = it->second;
    }
}

std::vector<std::pair<std::string, const Tensor*>> with_prefix(const std::vector<NamedTensorRef>& refs,
                                                               const std::string& prefix) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (const auto& [name, t] : refs) out.emplace_back(prefix + name, t);
    return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
        if (!out.flush()) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j) {
    write_text_atomic(path, j.dump(2) + "\n");
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace ris
