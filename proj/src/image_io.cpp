#include "vsnet/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vsnet {

namespace {

void check_image(const Image& img) {
    if (img.h < 1 || img.w < 1) throw std::invalid_argument("image: empty");
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("image: channels must be 1 or 3");
    std::size_t need = static_cast<std::size_t>(img.h) * img.w * img.channels;
    if (img.data.size() != need) throw std::invalid_argument("image: data size mismatch");
}

std::uint8_t to_byte(double v) {
    double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(is),
                                    std::istreambuf_iterator<char>()};
    return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("short write to " + path);
}

// ---- PNG ----

constexpr std::uint8_t kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32_be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) |
           (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
    put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0, out.data() + crc_start, static_cast<uInt>(4 + payload.size())));
    put_u32_be(out, crc);
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

Image make_image(int h, int w, int channels, double fill) {
    if (h < 1 || w < 1) throw std::invalid_argument("make_image: empty");
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("make_image: channels must be 1 or 3");
    Image img;
    img.h = h;
    img.w = w;
    img.channels = channels;
    img.data.assign(static_cast<std::size_t>(h) * w * channels, fill);
    return img;
}

void write_png(const std::string& path, const Image& img) {
    check_image(img);
    const int bpp = img.channels;
    const std::size_t rowbytes = static_cast<std::size_t>(img.w) * bpp;

    std::vector<std::uint8_t> raw((rowbytes + 1) * img.h);
    std::size_t k = 0, src = 0;
    for (int y = 0; y < img.h; ++y) {
        raw[k++] = 0;  // filter: none
        for (std::size_t i = 0; i < rowbytes; ++i) raw[k++] = to_byte(img.data[src++]);
    }

    uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> deflated(bound);
    if (::compress2(deflated.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                    Z_DEFAULT_COMPRESSION) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    deflated.resize(bound);

    std::vector<std::uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(img.w));
    put_u32_be(ihdr, static_cast<std::uint32_t>(img.h));
    ihdr.push_back(8);                                  // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);          // gray / truecolor
    ihdr.push_back(0);                                  // deflate
    ihdr.push_back(0);                                  // adaptive filtering
    ihdr.push_back(0);                                  // no interlace

    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", deflated);
    put_chunk(out, "IEND", {});
    write_file(path, out);
}

Image read_png(const std::string& path) {
    auto bytes = read_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
        throw std::runtime_error(path + ": not a PNG");

    int w = 0, h = 0, in_channels = 0, out_channels = 0;
    bool have_ihdr = false, have_iend = false;
    std::vector<std::uint8_t> idat;

    std::size_t pos = 8;
    while (pos < bytes.size()) {
        if (pos + 12 > bytes.size()) throw std::runtime_error(path + ": truncated chunk");
        std::uint32_t len = get_u32_be(&bytes[pos]);
        if (pos + 12 + len > bytes.size())
            throw std::runtime_error(path + ": truncated chunk");
        const std::uint8_t* type = &bytes[pos + 4];
        const std::uint8_t* payload = &bytes[pos + 8];
        std::uint32_t crc = get_u32_be(&bytes[pos + 8 + len]);
        std::uint32_t want =
            static_cast<std::uint32_t>(::crc32(0, type, static_cast<uInt>(4 + len)));
        if (crc != want) throw std::runtime_error(path + ": chunk CRC mismatch");

        std::string name(reinterpret_cast<const char*>(type), 4);
        if (name == "IHDR") {
            if (len != 13) throw std::runtime_error(path + ": bad IHDR");
            w = static_cast<int>(get_u32_be(payload));
            h = static_cast<int>(get_u32_be(payload + 4));
            int depth = payload[8], color = payload[9];
            int compression = payload[10], filter = payload[11], interlace = payload[12];
            if (w < 1 || h < 1) throw std::runtime_error(path + ": bad dimensions");
            if (depth != 8) throw std::runtime_error(path + ": only 8-bit supported");
            if (compression != 0 || filter != 0)
                throw std::runtime_error(path + ": bad IHDR methods");
            if (interlace != 0) throw std::runtime_error(path + ": interlaced");
            switch (color) {
                case 0: in_channels = 1; out_channels = 1; break;
                case 2: in_channels = 3; out_channels = 3; break;
                case 4: in_channels = 2; out_channels = 1; break;  // alpha dropped
                case 6: in_channels = 4; out_channels = 3; break;  // alpha dropped
                default: throw std::runtime_error(path + ": palette PNG unsupported");
            }
            have_ihdr = true;
        } else if (name == "IDAT") {
            if (!have_ihdr) throw std::runtime_error(path + ": IDAT before IHDR");
            idat.insert(idat.end(), payload, payload + len);
        } else if (name == "IEND") {
            have_iend = true;
            break;
        }
        // ancillary chunks are skipped
        pos += 12 + len;
    }
    if (!have_ihdr || !have_iend || idat.empty())
        throw std::runtime_error(path + ": missing required chunks");

    const std::size_t rowbytes = static_cast<std::size_t>(w) * in_channels;
    std::vector<std::uint8_t> raw((rowbytes + 1) * h);
    uLongf outlen = static_cast<uLongf>(raw.size());
    int rc = ::uncompress(raw.data(), &outlen, idat.data(), static_cast<uLong>(idat.size()));
    if (rc != Z_OK || outlen != raw.size())
        throw std::runtime_error(path + ": inflate failed");

    // undo row filters in place; prior holds the reconstructed previous row
    std::vector<std::uint8_t> cur(rowbytes), prior(rowbytes, 0);
    Image img = make_image(h, w, out_channels);
    std::size_t dst = 0;
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* src = &raw[static_cast<std::size_t>(y) * (rowbytes + 1)];
        int ftype = src[0];
        ++src;
        for (std::size_t i = 0; i < rowbytes; ++i) {
            int a = i >= static_cast<std::size_t>(in_channels)
                        ? cur[i - in_channels] : 0;          // left
            int b = prior[i];                                // up
            int c = i >= static_cast<std::size_t>(in_channels)
                        ? prior[i - in_channels] : 0;        // up-left
            int x = src[i];
            switch (ftype) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += b; break;
                case 3: x += (a + b) / 2; break;
                case 4: x += paeth(a, b, c); break;
                default: throw std::runtime_error(path + ": bad row filter");
            }
            cur[i] = static_cast<std::uint8_t>(x & 0xff);
        }
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < out_channels; ++ch)
                img.data[dst++] = cur[static_cast<std::size_t>(x) * in_channels + ch] / 255.0;
        std::swap(cur, prior);
    }
    return img;
}

// ---- PNM ----

namespace {

// next token after whitespace and '#' comments
std::string pnm_token(std::istream& is) {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            while ((c = is.peek()) != EOF && !std::isspace(c) && c != '#')
                tok.push_back(static_cast<char>(is.get()));
            return tok;
        }
    }
    throw std::runtime_error("pnm: unexpected end of header");
}

}  // namespace

void write_pnm(const std::string& path, const Image& img) {
    check_image(img);
    std::ostringstream header;
    header << (img.channels == 1 ? "P5" : "P6") << "\n"
           << img.w << " " << img.h << "\n255\n";
    std::string head = header.str();
    std::vector<std::uint8_t> out(head.begin(), head.end());
    for (double v : img.data) out.push_back(to_byte(v));
    write_file(path, out);
}

Image read_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string magic = pnm_token(is);
    int channels;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw std::runtime_error(path + ": unsupported PNM magic " + magic);

    int w = std::stoi(pnm_token(is));
    int h = std::stoi(pnm_token(is));
    int maxval = std::stoi(pnm_token(is));
    if (w < 1 || h < 1) throw std::runtime_error(path + ": bad dimensions");
    if (maxval < 1 || maxval > 255)
        throw std::runtime_error(path + ": only 8-bit PNM supported");
    is.get();  // single whitespace after maxval

    std::size_t n = static_cast<std::size_t>(h) * w * channels;
    std::vector<std::uint8_t> bytes(n);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw std::runtime_error(path + ": truncated pixel data");

    Image img = make_image(h, w, channels);
    for (std::size_t i = 0; i < n; ++i) img.data[i] = bytes[i] / double(maxval);
    return img;
}

// ---- dispatch ----

namespace {

std::string lower_ext(const std::string& path) {
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    for (char& c : ext) c = static_cast<char>(std::tolower(c));
    return ext;
}

}  // namespace

Image read_image(const std::string& path) {
    std::string ext = lower_ext(path);
    if (ext == "png") return read_png(path);
    if (ext == "pgm" || ext == "ppm") return read_pnm(path);
    throw std::runtime_error(path + ": unsupported image extension");
}

void write_image(const std::string& path, const Image& img) {
    std::string ext = lower_ext(path);
    if (ext == "png") return write_png(path, img);
    if (ext == "pgm" || ext == "ppm") return write_pnm(path, img);
    throw std::runtime_error(path + ": unsupported image extension");
}

// ---- tensor bridge ----

Tensor image_to_tensor(const Image& img) {
    check_image(img);
    std::vector<double> planar(img.data.size());
    std::size_t plane = static_cast<std::size_t>(img.h) * img.w;
    for (int c = 0; c < img.channels; ++c)
        for (std::size_t p = 0; p < plane; ++p)
            planar[c * plane + p] = img.data[p * img.channels + c];
    return from_data({1, img.channels, img.h, img.w}, std::move(planar));
}

Image tensor_to_image(const Tensor& t) {
    if (!t.defined() || t.shape().size() != 4 || t.shape()[0] != 1)
        throw std::invalid_argument("tensor_to_image: want {1,C,H,W}");
    int c = t.shape()[1], h = t.shape()[2], w = t.shape()[3];
    if (c != 1 && c != 3) throw std::invalid_argument("tensor_to_image: C must be 1 or 3");
    Image img = make_image(h, w, c);
    std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p)
            img.data[p * c + ch] = t.at(ch * plane + p);
    return img;
}

}  // namespace vsnet
