#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "vsnet/image_io.hpp"
#include "vsnet/tensor.hpp"

using namespace vsnet;

namespace {

const std::filesystem::path kData = VSN_TEST_DATA_DIR;

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image random_image(int h, int w, int channels, std::uint64_t seed) {
    Image img = make_image(h, w, channels);
    RandomStream rng(seed);
    for (double& v : img.data) v = rng.next_uniform();
    return img;
}

// decoded pixels must match an externally produced byte dump exactly
void check_against_dump(const Image& img, const std::filesystem::path& dump) {
    auto expect = slurp(dump);
    REQUIRE(img.data.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
        INFO("byte ", i);
        CHECK(quantize(img.data[i]) == expect[i]);
    }
}

}  // namespace

TEST_CASE("png round-trip is 8-bit exact") {
    for (int channels : {1, 3}) {
        Image img = random_image(13, 17, channels, 42 + channels);
        auto path = temp_file("vsn_io_rt.png");
        write_png(path.string(), img);
        Image back = read_png(path.string());
        CHECK(back.h == img.h);
        CHECK(back.w == img.w);
        CHECK(back.channels == channels);
        REQUIRE(back.data.size() == img.data.size());
        for (std::size_t i = 0; i < img.data.size(); ++i)
            CHECK(quantize(back.data[i]) == quantize(img.data[i]));
        std::filesystem::remove(path);
    }
}

TEST_CASE("externally encoded png decodes exactly") {
    // fixtures cover row filters 0-4 across the set
    Image rgb = read_png((kData / "gradient_rgb.png").string());
    CHECK(rgb.h == 12);
    CHECK(rgb.w == 16);
    CHECK(rgb.channels == 3);
    check_against_dump(rgb, kData / "gradient_rgb.bin");

    Image gray = read_png((kData / "noise_gray.png").string());
    CHECK(gray.channels == 1);
    check_against_dump(gray, kData / "noise_gray.bin");
}

TEST_CASE("alpha channels are dropped on decode") {
    Image rgba = read_png((kData / "rgba_drop.png").string());
    CHECK(rgba.channels == 3);
    check_against_dump(rgba, kData / "rgba_drop.bin");

    Image la = read_png((kData / "gray_alpha.png").string());
    CHECK(la.channels == 1);
    check_against_dump(la, kData / "gray_alpha.bin");
}

TEST_CASE("externally encoded ppm decodes exactly") {
    Image img = read_pnm((kData / "sample.ppm").string());
    CHECK(img.h == 4);
    CHECK(img.w == 5);
    CHECK(img.channels == 3);
    check_against_dump(img, kData / "sample_ppm.bin");
}

TEST_CASE("pnm round-trip is 8-bit exact") {
    for (auto [channels, ext] : {std::pair{1, ".pgm"}, std::pair{3, ".ppm"}}) {
        Image img = random_image(6, 9, channels, 7);
        auto path = temp_file(std::string("vsn_io_rt") + ext);
        write_pnm(path.string(), img);
        Image back = read_pnm(path.string());
        CHECK(back.channels == channels);
        REQUIRE(back.data.size() == img.data.size());
        for (std::size_t i = 0; i < img.data.size(); ++i)
            CHECK(quantize(back.data[i]) == quantize(img.data[i]));
        std::filesystem::remove(path);
    }
}

TEST_CASE("pnm header comments and maxval scaling") {
    auto path = temp_file("vsn_io_hdr.pgm");
    {
        std::ofstream os(path, std::ios::binary);
        os << "P5 # a comment\n# another\n 4\t2 \n100\n";
        for (int i = 0; i < 8; ++i) os.put(static_cast<char>(i * 10));
    }
    Image img = read_pnm(path.string());
    CHECK(img.h == 2);
    CHECK(img.w == 4);
    CHECK(img.data[3] == doctest::Approx(30.0 / 100.0));
    std::filesystem::remove(path);
}

TEST_CASE("png decode errors") {
    CHECK_THROWS_AS(read_png("/nonexistent/nope.png"), std::runtime_error);

    auto bad = temp_file("vsn_io_bad.png");
    {
        std::ofstream os(bad, std::ios::binary);
        os << "not a png at all";
    }
    CHECK_THROWS_AS(read_png(bad.string()), std::runtime_error);

    // corrupt one payload byte: the chunk CRC must catch it
    Image img = random_image(5, 5, 3, 3);
    write_png(bad.string(), img);
    auto bytes = slurp(bad);
    bytes[bytes.size() / 2] ^= 0xff;
    {
        std::ofstream os(bad, std::ios::binary | std::ios::trunc);
        os.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(read_png(bad.string()), std::runtime_error);

    // truncation
    write_png(bad.string(), img);
    bytes = slurp(bad);
    {
        std::ofstream os(bad, std::ios::binary | std::ios::trunc);
        os.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size() - 7));
    }
    CHECK_THROWS_AS(read_png(bad.string()), std::runtime_error);
    std::filesystem::remove(bad);
}

TEST_CASE("dispatch by extension") {
    Image img = random_image(4, 4, 1, 5);
    auto png = temp_file("vsn_io_d.png");
    auto pgm = temp_file("vsn_io_d.pgm");
    write_image(png.string(), img);
    write_image(pgm.string(), img);
    Image a = read_image(png.string());
    Image b = read_image(pgm.string());
    REQUIRE(a.data.size() == b.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i)
        CHECK(quantize(a.data[i]) == quantize(b.data[i]));
    CHECK_THROWS_AS(read_image("file.bmp"), std::runtime_error);
    CHECK_THROWS_AS(write_image("file.bmp", img), std::runtime_error);
    std::filesystem::remove(png);
    std::filesystem::remove(pgm);
}

TEST_CASE("image validation") {
    CHECK_THROWS_AS(make_image(0, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_image(4, 4, 2), std::invalid_argument);
    Image img = make_image(2, 2, 1);
    img.data.pop_back();
    CHECK_THROWS_AS(write_png(temp_file("x.png").string(), img),
                    std::invalid_argument);
}

TEST_CASE("tensor bridge round-trips unquantized") {
    Image img = random_image(5, 7, 3, 11);
    Tensor t = image_to_tensor(img);
    REQUIRE(t.shape() == Shape{1, 3, 5, 7});
    // planar layout: t[c][y][x] == interleaved at(y, x, c)
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 7; ++x)
            for (int c = 0; c < 3; ++c)
                CHECK(t.at((static_cast<std::size_t>(c) * 5 + y) * 7 + x) ==
                      img.at(y, x, c));
    Image back = tensor_to_image(t);
    CHECK(back.data == img.data);

    CHECK_THROWS_AS(tensor_to_image(zeros({2, 3, 4, 4})), std::invalid_argument);
    CHECK_THROWS_AS(tensor_to_image(zeros({1, 2, 4, 4})), std::invalid_argument);
}
