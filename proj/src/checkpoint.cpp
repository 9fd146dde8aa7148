#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsnet/model.hpp"

namespace vsnet {

namespace {

constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(os, bits);
}

float read_f32(std::istream& is) {
    std::uint32_t bits = read_u32(is);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

void save_checkpoint(const VsNet& model, const std::string& path) {
    if (!model.built()) throw std::logic_error("save_checkpoint: model not built");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);

    auto named = model.named_parameters();
    os.write("VSNT", 4);
    write_u32(os, kFormatVersion);
    write_u32(os, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, tensor] : named) {
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Shape& shape = tensor.shape();
        write_u32(os, static_cast<std::uint32_t>(shape.size()));
        for (int e : shape) write_u32(os, static_cast<std::uint32_t>(e));
        for (double v : tensor.data()) write_f32(os, static_cast<float>(v));
    }
    os.flush();
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

void load_checkpoint(VsNet& model, const std::string& path) {
    if (!model.built()) throw std::logic_error("load_checkpoint: model not built");
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);

    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "VSNT", 4) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    std::uint32_t version = read_u32(is);
    if (version != kFormatVersion)
        throw std::runtime_error("load_checkpoint: unsupported format version " +
                                 std::to_string(version));

    std::uint32_t count = read_u32(is);
    std::map<std::string, std::pair<Shape, std::vector<float>>> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = read_u32(is);
        if (name_len == 0 || name_len > 4096)
            throw std::runtime_error("load_checkpoint: implausible name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw std::runtime_error("checkpoint: truncated file");
        std::uint32_t rank = read_u32(is);
        if (rank > 8) throw std::runtime_error("load_checkpoint: implausible rank");
        Shape shape;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint32_t e = read_u32(is);
            if (e == 0 || e > (1u << 24))
                throw std::runtime_error("load_checkpoint: implausible extent");
            shape.push_back(static_cast<int>(e));
            numel *= e;
        }
        std::vector<float> payload(numel);
        for (std::size_t j = 0; j < numel; ++j) payload[j] = read_f32(is);
        if (!entries.emplace(name, std::make_pair(std::move(shape), std::move(payload)))
                 .second)
            throw std::runtime_error("load_checkpoint: duplicate entry " + name);
    }
    if (is.peek() != std::char_traits<char>::eof())
        throw std::runtime_error("load_checkpoint: trailing bytes in " + path);

    auto named = model.named_parameters();
    if (entries.size() != named.size())
        throw std::runtime_error("load_checkpoint: expected " +
                                 std::to_string(named.size()) + " entries, found " +
                                 std::to_string(entries.size()));
    for (auto& [name, tensor] : named) {
        auto it = entries.find(name);
        if (it == entries.end())
            throw std::runtime_error("load_checkpoint: missing parameter " + name);
        if (it->second.first != tensor.shape())
            throw std::runtime_error("load_checkpoint: shape mismatch for " + name +
                                     ": file has " + shape_str(it->second.first) +
                                     ", model has " + shape_str(tensor.shape()));
        auto dst = tensor.mutable_data();
        const std::vector<float>& src = it->second.second;
        for (std::size_t j = 0; j < dst.size(); ++j)
            dst[j] = static_cast<double>(src[j]);
        tensor.zero_grad();
    }
}

}  // namespace vsnet
