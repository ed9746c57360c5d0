#include "doctest.h"

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "bgrid/io.hpp"
#include "oracles.hpp"

using namespace bgrid;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("tensor write/read roundtrip") {
    Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
    const auto path = temp_path("rt.bt");
    write_tensor(t, path);
    const Tensor back = read_tensor(path);
    CHECK(back.shape() == t.shape());
    CHECK(back.values() == t.values());
    CHECK(back.dtype() == Dtype::Float64);
}

TEST_CASE("tensor file layout: header plus f32 payload") {
    Tensor t({1, 128}, Dtype::Float32);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i) / 128.0f;
    const auto path = temp_path("layout.bt");
    write_tensor(t, path);
    // 4 magic + 1 dtype + 1 rank + 2*4 extents + 128*4 payload
    CHECK(std::filesystem::file_size(path) == 14 + 128 * 4);
    const Tensor back = read_tensor(path);
    CHECK(back.dtype() == Dtype::Float32);
    CHECK(back.values() == t.values());
}

TEST_CASE("tensor shape record for a 3-channel 3D field") {
    Tensor t({3, 4, 4, 4});
    const auto path = temp_path("field.bt");
    write_tensor(t, path);
    CHECK(read_tensor(path).shape() == std::vector<std::size_t>{3, 4, 4, 4});
}

TEST_CASE("empty shape is rejected") {
    CHECK_THROWS_AS(Tensor(std::vector<std::size_t>{}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2, 0, 3}), std::invalid_argument);
}

TEST_CASE("malformed tensor files") {
    const auto path = temp_path("bad.bt");

    SUBCASE("wrong magic") {
        write_bytes(path, std::string("XXXX\x01\x01", 6) + std::string(8, '\0'));
        try {
            read_tensor(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(e.code() == IoErrc::MalformedHeader);
        }
    }
    SUBCASE("zero-byte file") {
        write_bytes(path, "");
        try {
            read_tensor(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(e.code() == IoErrc::Truncated);
        }
    }
    SUBCASE("unsupported dtype code") {
        std::string bytes = "BLG1";
        bytes.push_back(2);  // dtype
        bytes.push_back(1);  // rank
        bytes += std::string(4, '\x01');
        write_bytes(path, bytes);
        try {
            read_tensor(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(e.code() == IoErrc::UnsupportedDtype);
        }
    }
    SUBCASE("truncated payload") {
        Tensor t({4, 4});
        write_tensor(t, path);
        std::string bytes;
        {
            std::ifstream f(path, std::ios::binary);
            bytes.assign(std::istreambuf_iterator<char>(f), {});
        }
        write_bytes(path, bytes.substr(0, bytes.size() - 3));
        try {
            read_tensor(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(e.code() == IoErrc::Truncated);
        }
    }
    SUBCASE("missing file") {
        try {
            read_tensor(temp_path("does_not_exist.bt"));
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(e.code() == IoErrc::NotFound);
        }
    }
}

TEST_CASE("binary roundtrip is bit-exact on random tensors of rank 1-4") {
    oracle::Rng rng(21);
    const auto path = temp_path("prop.bt");
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t rank = 1 + trial % 4;
        std::vector<std::size_t> shape(rank);
        for (auto& e : shape) e = 1 + rng.integer(5);
        const Dtype dtype = trial % 2 ? Dtype::Float32 : Dtype::Float64;
        Tensor t(shape, dtype);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double v = rng.uniform(-100.0, 100.0);
            t[i] = dtype == Dtype::Float32 ? static_cast<float>(v) : v;
        }
        write_tensor(t, path);
        const Tensor back = read_tensor(path);
        CHECK(back.shape() == t.shape());
        CHECK(back.dtype() == t.dtype());
        CHECK(back.values() == t.values());  // bit-exact
    }
}

TEST_CASE("pgm read normalizes 8-bit values") {
    const auto path = temp_path("gray.pgm");
    write_bytes(path, "P5\n2 2\n255\n" + std::string("\x00\xff\x80\x40", 4));
    const Image img = read_image(path);
    CHECK(img.channels() == 1);
    CHECK(img.spatial_shape() == std::vector<std::size_t>{2, 2});
    CHECK(img.tensor[0] == 0.0);
    CHECK(img.tensor[1] == 1.0);
    CHECK(img.tensor[2] == doctest::Approx(128.0 / 255.0));
    CHECK(img.value_range[0] == 0.0);
    CHECK(img.value_range[1] == 255.0);
}

TEST_CASE("pgm rejects unsupported bit depth") {
    const auto path = temp_path("deep.pgm");
    write_bytes(path, "P5\n1 1\n65535\n\x01\x00");
    try {
        read_image(path);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(e.code() == IoErrc::UnsupportedBitDepth);
    }
}

TEST_CASE("image roundtrip error is bounded by half a quantization step") {
    oracle::Rng rng(22);
    Image img(Tensor({1, 8, 8}));
    for (std::size_t i = 0; i < img.tensor.size(); ++i) img.tensor[i] = rng.uniform();
    const auto path = temp_path("quant.pgm");
    write_image(img, path);
    const Image back = read_image(path);
    for (std::size_t i = 0; i < img.tensor.size(); ++i) {
        CHECK(std::abs(back.tensor[i] - img.tensor[i]) <= 1.0 / 510.0 + 1e-12);
    }
    // a second write/read cycle is exact
    const auto path2 = temp_path("quant2.pgm");
    write_image(back, path2);
    const Image again = read_image(path2);
    CHECK(again.tensor.values() == back.tensor.values());
}

TEST_CASE("png roundtrip for gray and rgb") {
    SUBCASE("gray") {
        Image img(Tensor({1, 3, 5}));
        for (std::size_t i = 0; i < img.tensor.size(); ++i) {
            img.tensor[i] = static_cast<double>(i) / 14.0;
        }
        const auto path = temp_path("g.png");
        write_image(img, path);
        const Image back = read_image(path);
        CHECK(back.channels() == 1);
        CHECK(back.spatial_shape() == img.spatial_shape());
        for (std::size_t i = 0; i < img.tensor.size(); ++i) {
            CHECK(std::abs(back.tensor[i] - img.tensor[i]) <= 1.0 / 510.0 + 1e-12);
        }
    }
    SUBCASE("rgb") {
        Image img(Tensor({3, 2, 2}));
        for (std::size_t i = 0; i < img.tensor.size(); ++i) {
            img.tensor[i] = static_cast<double>(i) / 11.0;
        }
        const auto path = temp_path("c.png");
        write_image(img, path);
        const Image back = read_image(path);
        CHECK(back.channels() == 3);
        for (std::size_t i = 0; i < img.tensor.size(); ++i) {
            CHECK(std::abs(back.tensor[i] - img.tensor[i]) <= 1.0 / 510.0 + 1e-12);
        }
    }
}

TEST_CASE("3d images travel through the tensor format") {
    Image vol(Tensor({1, 4, 5, 6}));
    for (std::size_t i = 0; i < vol.tensor.size(); ++i) vol.tensor[i] = 1e-3 * i;
    const auto path = temp_path("vol.bt");
    write_image(vol, path);
    write_spacing_sidecar(path, {1.5, 2.0, 2.5});
    const Image back = read_image(path);
    CHECK(back.spatial_shape() == std::vector<std::size_t>{4, 5, 6});
    CHECK(back.tensor.values() == vol.tensor.values());
    CHECK(back.spacing == std::vector<double>{1.5, 2.0, 2.5});
}

TEST_CASE("keypoints csv parsing") {
    const auto path = temp_path("kp.csv");

    SUBCASE("2d rows, order preserved") {
        write_bytes(path, "# fixed_y,fixed_x,moving_y,moving_x\n10,20,12,21\n1,2,3,4\n");
        const KeypointSet kps = read_keypoints(path);
        CHECK(kps.dim == 2);
        CHECK(kps.count() == 2);
        CHECK(kps.fixed_point(0)[0] == 10.0);
        CHECK(kps.fixed_point(0)[1] == 20.0);
        CHECK(kps.moving_point(0)[0] == 12.0);
        CHECK(kps.moving_point(0)[1] == 21.0);
        CHECK(kps.fixed_point(1)[0] == 1.0);
    }
    SUBCASE("3d rows") {
        write_bytes(path, "1,2,3,4,5,6\n7,8,9,10,11,12\n0,0,0,1,1,1\n");
        const KeypointSet kps = read_keypoints(path);
        CHECK(kps.dim == 3);
        CHECK(kps.count() == 3);
    }
    SUBCASE("ragged row") {
        write_bytes(path, "1,2,3,4\n1,2,3,4,5\n");
        try {
            read_keypoints(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(e.code() == IoErrc::RaggedRow);
        }
    }
    SUBCASE("non-numeric field") {
        write_bytes(path, "1,2,x,4\n");
        try {
            read_keypoints(path);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(e.code() == IoErrc::BadNumber);
        }
    }
    SUBCASE("extent validation") {
        write_bytes(path, "1,2,3,4\n");
        const KeypointSet kps = read_keypoints(path);
        const std::vector<std::size_t> small{3, 3};
        CHECK_THROWS_AS(kps.validate_extent(small), std::out_of_range);
        const std::vector<std::size_t> big{8, 8};
        CHECK_NOTHROW(kps.validate_extent(big));
    }
}
