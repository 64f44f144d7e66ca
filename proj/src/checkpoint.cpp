#include "hma/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace hma::checkpoint {

namespace {

constexpr char kMagic[4] = {'H', 'M', 'A', '1'};

void put_f32(std::ostream& os, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    const std::array<char, 4> bytes{static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                                    static_cast<char>((bits >> 16) & 0xff),
                                    static_cast<char>((bits >> 24) & 0xff)};
    os.write(bytes.data(), 4);
}

float get_f32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("truncated payload");
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                               (static_cast<std::uint32_t>(b[2]) << 16) |
                               (static_cast<std::uint32_t>(b[3]) << 24);
    return std::bit_cast<float>(bits);
}

std::string read_line(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("truncated header");
    return line;
}

}  // namespace

void write(std::ostream& os, const TensorMap& tensors) {
    os.write(kMagic, 4);
    os << '\n' << tensors.size() << '\n';
    for (const auto& [name, t] : tensors) {
        if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
            throw FormatError("invalid tensor name '" + name + "'");
        }
        os << name << " f32";
        for (auto d : t.shape()) os << ' ' << d;
        os << '\n';
    }
    for (const auto& [name, t] : tensors) {
        for (float v : t.data()) put_f32(os, v);
    }
    if (!os) throw FormatError("write failed");
}

TensorMap read(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
        throw FormatError("missing HMA1 version tag");
    }
    if (is.get() != '\n') throw FormatError("malformed header");
    std::size_t count = 0;
    {
        std::istringstream ls(read_line(is));
        if (!(ls >> count)) throw FormatError("missing entry count");
    }
    std::vector<std::pair<std::string, Shape>> entries;
    for (std::size_t i = 0; i < count; ++i) {
        std::istringstream ls(read_line(is));
        std::string name, dtype;
        if (!(ls >> name >> dtype)) throw FormatError("malformed header entry");
        if (dtype != "f32") throw FormatError("unsupported dtype '" + dtype + "' for " + name);
        Shape shape;
        std::size_t d = 0;
        while (ls >> d) shape.push_back(d);
        if (!ls.eof()) throw FormatError("malformed shape for " + name);
        entries.emplace_back(std::move(name), std::move(shape));
    }
    TensorMap out;
    for (auto& [name, shape] : entries) {
        std::vector<float> data(shape_numel(shape));
        for (auto& v : data) v = get_f32(is);
        out.emplace(name, Tensor(shape, std::move(data)));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after payload");
    return out;
}

void save(const std::filesystem::path& path, const TensorMap& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write(os, tensors);
}

TensorMap load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return read(is);
}

}  // namespace hma::checkpoint
