#include "bgrid/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace bgrid {

namespace {

constexpr char kMagic[4] = {'B', 'L', 'G', '1'};

void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoErrc::NotFound, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool has_extension(const std::string& path, const char* ext) {
    auto e = std::filesystem::path(path).extension().string();
    std::transform(e.begin(), e.end(), e.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e == ext;
}

// --- PGM (P5, 8-bit) ---------------------------------------------------

int pgm_next_token(const std::string& bytes, std::size_t& pos, std::string& tok) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        } else {
            break;
        }
    }
    tok.clear();
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        tok.push_back(bytes[pos++]);
    }
    return tok.empty() ? -1 : 0;
}

Image read_pgm(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw IoError(IoErrc::MalformedHeader, path + ": not a P5 PGM file");
    }
    std::size_t pos = 2;
    std::string tok;
    long dims[3];  // width, height, maxval
    for (long& d : dims) {
        if (pgm_next_token(bytes, pos, tok) != 0) {
            throw IoError(IoErrc::MalformedHeader, path + ": incomplete PGM header");
        }
        char* end = nullptr;
        d = std::strtol(tok.c_str(), &end, 10);
        if (end == tok.c_str() || *end != '\0' || d <= 0) {
            throw IoError(IoErrc::MalformedHeader, path + ": bad PGM header field");
        }
    }
    if (dims[2] != 255) {
        throw IoError(IoErrc::UnsupportedBitDepth,
                      path + ": only 8-bit PGM (maxval 255) is supported");
    }
    ++pos;  // single whitespace after maxval
    const std::size_t w = static_cast<std::size_t>(dims[0]);
    const std::size_t h = static_cast<std::size_t>(dims[1]);
    if (bytes.size() < pos + w * h) {
        throw IoError(IoErrc::Truncated, path + ": PGM payload shorter than header claims");
    }
    Tensor t({1, h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        t[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
    }
    Image img(std::move(t));
    img.value_range = {0.0, 255.0};
    return img;
}

void write_pgm(const Image& image, const std::string& path) {
    if (image.channels() != 1 || image.spatial_rank() != 2) {
        throw IoError(IoErrc::UnsupportedFormat, "PGM output requires a single 2D channel");
    }
    const std::size_t h = image.tensor.extent(1);
    const std::size_t w = image.tensor.extent(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(IoErrc::WriteFailed, "cannot open " + path + " for writing");
    out << "P5\n" << w << " " << h << "\n255\n";
    std::string payload(h * w, '\0');
    for (std::size_t i = 0; i < h * w; ++i) {
        const double v = std::clamp(image.tensor[i], 0.0, 1.0);
        payload[i] = static_cast<char>(static_cast<int>(std::lround(v * 255.0)));
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError(IoErrc::WriteFailed, "short write to " + path);
}

// --- PNG (8-bit gray or RGB via libpng) --------------------------------

struct PngReadCtx {
    const unsigned char* data;
    std::size_t size;
    std::size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t len) {
    auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
    if (ctx->pos + len > ctx->size) {
        png_error(png, "read past end of buffer");
    }
    std::memcpy(out, ctx->data + ctx->pos, len);
    ctx->pos += len;
}

Image read_png(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() < 8 ||
        png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
        throw IoError(IoErrc::MalformedHeader, path + ": not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoErrc::MalformedHeader, path + ": libpng init failed");
    }
    std::vector<png_bytep> rows;
    std::vector<unsigned char> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoErrc::Truncated, path + ": PNG decode failed");
    }
    PngReadCtx ctx{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), 0};
    png_set_read_fn(png, &ctx, png_mem_read);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoErrc::UnsupportedBitDepth, path + ": 16-bit PNG is not supported");
    }
    png_set_expand(png);        // palette -> RGB, gray<8 -> 8
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const std::size_t w = png_get_image_width(png, info);
    const std::size_t h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const std::size_t channels = (color == PNG_COLOR_TYPE_GRAY) ? 1 : 3;

    pixels.assign(h * w * channels, 0);
    rows.resize(h);
    for (std::size_t r = 0; r < h; ++r) rows[r] = pixels.data() + r * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor t({channels, h, w});
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < h * w; ++i) {
            t[c * h * w + i] = pixels[i * channels + c] / 255.0;
        }
    }
    Image img(std::move(t));
    img.value_range = {0.0, 255.0};
    return img;
}

void write_png(const Image& image, const std::string& path) {
    const std::size_t channels = image.channels();
    if (image.spatial_rank() != 2 || (channels != 1 && channels != 3)) {
        throw IoError(IoErrc::UnsupportedFormat, "PNG output requires 1 or 3 2D channels");
    }
    const std::size_t h = image.tensor.extent(1);
    const std::size_t w = image.tensor.extent(2);
    std::vector<unsigned char> pixels(h * w * channels);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < h * w; ++i) {
            const double v = std::clamp(image.tensor[c * h * w + i], 0.0, 1.0);
            pixels[i * channels + c] =
                static_cast<unsigned char>(std::lround(v * 255.0));
        }
    }
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError(IoErrc::WriteFailed, "cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError(IoErrc::WriteFailed, path + ": PNG encode failed");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t r = 0; r < h; ++r) {
        png_write_row(png, pixels.data() + r * w * channels);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace

// --- binary tensor format ----------------------------------------------

Tensor read_tensor(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() < 6) {
        throw IoError(IoErrc::Truncated, path + ": file too short for a tensor header");
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw IoError(IoErrc::MalformedHeader, path + ": bad magic bytes");
    }
    const auto dtype_code = static_cast<unsigned char>(bytes[4]);
    if (dtype_code > 1) {
        throw IoError(IoErrc::UnsupportedDtype,
                      path + ": unknown dtype code " + std::to_string(dtype_code));
    }
    const Dtype dtype = static_cast<Dtype>(dtype_code);
    const std::size_t rank = static_cast<unsigned char>(bytes[5]);
    if (rank == 0) {
        throw IoError(IoErrc::MalformedHeader, path + ": rank 0 tensor");
    }
    const std::size_t header = 6 + rank * 4;
    if (bytes.size() < header) {
        throw IoError(IoErrc::Truncated, path + ": extents truncated");
    }
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (std::size_t a = 0; a < rank; ++a) {
        const std::uint32_t e =
            get_u32_le(reinterpret_cast<const unsigned char*>(bytes.data()) + 6 + a * 4);
        if (e == 0) throw IoError(IoErrc::MalformedHeader, path + ": zero extent");
        shape[a] = e;
        n *= e;
    }
    const std::size_t elem = dtype == Dtype::Float32 ? 4 : 8;
    if (bytes.size() != header + n * elem) {
        throw IoError(IoErrc::Truncated, path + ": payload size mismatch");
    }
    Tensor t(shape, dtype);
    const char* payload = bytes.data() + header;
    if (dtype == Dtype::Float32) {
        for (std::size_t i = 0; i < n; ++i) {
            float v;
            std::memcpy(&v, payload + i * 4, 4);
            t[i] = static_cast<double>(v);
        }
    } else {
        std::memcpy(t.data(), payload, n * 8);
    }
    return t;
}

void write_tensor(const Tensor& t, const std::string& path) {
    if (t.rank() == 0) {
        throw IoError(IoErrc::UnsupportedFormat, "cannot write a rank-0 tensor");
    }
    if (t.rank() > 255) {
        throw IoError(IoErrc::UnsupportedFormat, "tensor rank exceeds format limit");
    }
    std::string out;
    out.append(kMagic, 4);
    out.push_back(static_cast<char>(t.dtype()));
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t e : t.shape()) {
        if (e > 0xffffffffULL) {
            throw IoError(IoErrc::UnsupportedFormat, "extent exceeds u32 range");
        }
        put_u32_le(out, static_cast<std::uint32_t>(e));
    }
    if (t.dtype() == Dtype::Float32) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            const float v = static_cast<float>(t[i]);
            char buf[4];
            std::memcpy(buf, &v, 4);
            out.append(buf, 4);
        }
    } else {
        out.append(reinterpret_cast<const char*>(t.data()), t.size() * 8);
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError(IoErrc::WriteFailed, "cannot open " + path + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError(IoErrc::WriteFailed, "short write to " + path);
}

// --- images -------------------------------------------------------------

Image read_image(const std::string& path) {
    Image img;
    if (has_extension(path, ".pgm")) {
        img = read_pgm(path);
    } else if (has_extension(path, ".png")) {
        img = read_png(path);
    } else {
        Tensor t = read_tensor(path);
        if (t.rank() == 2 || t.rank() == 3) {
            // single channel; rank 2 is a 2D image, rank 3 a 3D volume
            auto shape = t.shape();
            shape.insert(shape.begin(), 1);
            img = Image(Tensor(shape, std::move(t.values())));
        } else if (t.rank() == 4) {
            img = Image(std::move(t));
        } else {
            throw IoError(IoErrc::UnsupportedFormat,
                          path + ": tensor rank " + std::to_string(t.rank()) +
                              " is not an image");
        }
    }
    auto spacing = read_spacing_sidecar(path, img.spatial_rank());
    if (!spacing.empty()) img.set_spacing(std::move(spacing));
    return img;
}

void write_image(const Image& image, const std::string& path) {
    if (has_extension(path, ".pgm")) {
        write_pgm(image, path);
    } else if (has_extension(path, ".png")) {
        write_png(image, path);
    } else {
        if (image.channels() == 1) {
            auto spatial = image.spatial_shape();
            Tensor t(spatial, image.tensor.values());
            write_tensor(t, path);
        } else {
            write_tensor(image.tensor, path);
        }
    }
}

// --- keypoints -----------------------------------------------------------

KeypointSet read_keypoints(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(IoErrc::NotFound, "cannot open " + path);
    KeypointSet kps;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        bool blank = true;
        for (char c : line) {
            if (!std::isspace(static_cast<unsigned char>(c))) { blank = false; break; }
        }
        if (blank) continue;

        std::vector<double> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            while (end && *end != '\0' && std::isspace(static_cast<unsigned char>(*end))) ++end;
            if (end == cell.c_str() || *end != '\0') {
                throw IoError(IoErrc::BadNumber, path + ":" + std::to_string(lineno) +
                                                     ": non-numeric field '" + cell + "'");
            }
            cols.push_back(v);
        }
        if (cols.size() != 2 && cols.size() != 4 && cols.size() != 6) {
            throw IoError(IoErrc::RaggedRow, path + ":" + std::to_string(lineno) +
                                                 ": expected 2, 4 or 6 columns, got " +
                                                 std::to_string(cols.size()));
        }
        const std::size_t d = cols.size() / 2;
        if (kps.dim != 0 && kps.dim != d) {
            throw IoError(IoErrc::RaggedRow, path + ":" + std::to_string(lineno) +
                                                 ": row dimension changed mid-file");
        }
        kps.add({cols.data(), d}, {cols.data() + d, d});
    }
    return kps;
}

// --- sidecars ------------------------------------------------------------

void write_spacing_sidecar(const std::string& data_path,
                           const std::vector<double>& spacing) {
    nlohmann::json j;
    j["spacing"] = spacing;
    std::ofstream out(data_path + ".json");
    if (!out) throw IoError(IoErrc::WriteFailed, "cannot write sidecar for " + data_path);
    out << j.dump(2) << "\n";
}

std::vector<double> read_spacing_sidecar(const std::string& data_path,
                                         std::size_t expected_rank) {
    std::ifstream in(data_path + ".json");
    if (!in) return {};
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception&) {
        throw IoError(IoErrc::MalformedHeader, data_path + ".json: invalid JSON sidecar");
    }
    if (!j.contains("spacing")) return {};
    auto spacing = j["spacing"].get<std::vector<double>>();
    if (spacing.size() != expected_rank) {
        throw IoError(IoErrc::MalformedHeader,
                      data_path + ".json: spacing rank mismatch");
    }
    return spacing;
}

}  // namespace bgrid
