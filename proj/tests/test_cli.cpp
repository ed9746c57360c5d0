#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "bgrid/io.hpp"

using nlohmann::json;

namespace {

struct CliResult {
    int exit_code;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string work_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "bgrid_cli_tests";
    std::filesystem::create_directories(dir);
    return dir.string();
}

CliResult run_cli(const std::string& args) {
    const std::string out_path = work_dir() + "/stdout.txt";
    const std::string err_path = work_dir() + "/stderr.txt";
    const std::string cmd =
        std::string(BGRID_CLI_PATH) + " " + args + " > " + out_path + " 2> " + err_path;
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

std::string make_pgm(const std::string& name, std::size_t size,
                     unsigned char lo = 60, unsigned char hi = 200) {
    const std::string path = work_dir() + "/" + name;
    std::ofstream f(path, std::ios::binary);
    f << "P5\n" << size << " " << size << "\n255\n";
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            f.put(static_cast<char>(x < size / 2 ? lo : hi));
        }
    }
    return path;
}

std::string write_text(const std::string& name, const std::string& content) {
    const std::string path = work_dir() + "/" + name;
    std::ofstream f(path);
    f << content;
    return path;
}

}  // namespace

TEST_CASE("filter subcommand") {
    const std::string in = make_pgm("in.pgm", 128);
    const std::string out = work_dir() + "/out.pgm";

    SUBCASE("reports the grid shape and succeeds") {
        const CliResult r =
            run_cli("filter --in " + in + " --out " + out + " --ss 8 --sr 0.1 --sigma 1");
        CHECK(r.exit_code == 0);
        CHECK(r.err.find("grid 16x16x10") != std::string::npos);
        CHECK(std::filesystem::exists(out));
    }
    SUBCASE("range rate 1 collapses the range axis") {
        const CliResult r = run_cli("filter --in " + in + " --out " + out + " --sr 1");
        CHECK(r.exit_code == 0);
        CHECK(r.err.find("16x16x1") != std::string::npos);
    }
    SUBCASE("missing input file exits 3") {
        const CliResult r = run_cli("filter --in " + work_dir() + "/nope.pgm --out " + out);
        CHECK(r.exit_code == 3);
    }
    SUBCASE("constant image exits 4") {
        const std::string flat = make_pgm("flat.pgm", 32, 90, 90);
        const CliResult r = run_cli("filter --in " + flat + " --out " + out);
        CHECK(r.exit_code == 4);
    }
    SUBCASE("bad flag value exits 2") {
        const CliResult r =
            run_cli("filter --in " + in + " --out " + out + " --splat-kernel cubic");
        CHECK(r.exit_code == 2);
    }
}

TEST_CASE("upsample subcommand") {
    const std::string guidance = make_pgm("hi.pgm", 64);
    const std::string low_path = work_dir() + "/low.bt";
    const std::string out = work_dir() + "/up.bt";

    bgrid::Tensor low({8, 8});
    for (std::size_t i = 0; i < 64; ++i) low[i] = (i % 8) < 4 ? 0.2 : 0.9;
    bgrid::write_tensor(low, low_path);

    SUBCASE("shapes follow the scale factor") {
        const CliResult r = run_cli("upsample --low " + low_path + " --guidance " + guidance +
                                    " --scale 8 --out " + out + " --ss 8 --sr 0.25");
        CHECK(r.exit_code == 0);
        const bgrid::Tensor up = bgrid::read_tensor(out);
        CHECK(up.shape() == std::vector<std::size_t>{64, 64});
    }
    SUBCASE("mismatched scale exits 2") {
        const CliResult r = run_cli("upsample --low " + low_path + " --guidance " + guidance +
                                    " --scale 6 --out " + out);
        CHECK(r.exit_code == 2);
    }
    SUBCASE("constant low tensor upsamples to a constant file") {
        bgrid::write_tensor(bgrid::Tensor::full({8, 8}, 0.5), low_path);
        const CliResult r = run_cli("upsample --low " + low_path + " --guidance " + guidance +
                                    " --scale 8 --out " + out);
        CHECK(r.exit_code == 0);
        const bgrid::Tensor up = bgrid::read_tensor(out);
        for (std::size_t i = 0; i < up.size(); ++i) {
            CHECK(up[i] == doctest::Approx(0.5).epsilon(1e-9));
        }
    }
}

TEST_CASE("register subcommand") {
    const std::string fixed = make_pgm("fixed.pgm", 64);
    const std::string field = work_dir() + "/field.bt";

    SUBCASE("uniform displacement keypoints give zero TRE") {
        const std::string kp =
            write_text("kp.csv", "8,8,11,8\n8,48,11,48\n48,8,51,8\n48,48,51,48\n");
        const CliResult r = run_cli("register --fixed " + fixed + " --keypoints " + kp +
                                    " --out " + field + " --ss 8 --sr 0.5 --tol 1e-9" +
                                    " --max-iter 100000");
        CHECK(r.exit_code == 0);
        const json rep = json::parse(r.out);
        CHECK(rep["converged"].get<bool>());
        CHECK(rep["tre_mm"].get<double>() <= 1e-3);
        CHECK(std::filesystem::exists(field));
        CHECK(std::filesystem::exists(field + ".json"));  // spacing sidecar

        const bgrid::Tensor vectors = bgrid::read_tensor(field);
        CHECK(vectors.shape() == std::vector<std::size_t>{2, 64, 64});
    }
    SUBCASE("empty keypoints exits 4") {
        const std::string kp = write_text("empty.csv", "# nothing here\n");
        const CliResult r =
            run_cli("register --fixed " + fixed + " --keypoints " + kp + " --out " + field);
        CHECK(r.exit_code == 4);
    }
    SUBCASE("iteration cap exits 5 but still writes the field") {
        std::filesystem::remove(field);
        const std::string kp = write_text("kp2.csv", "8,8,10,8\n48,48,48,50\n");
        const CliResult r = run_cli("register --fixed " + fixed + " --keypoints " + kp +
                                    " --out " + field + " --max-iter 1");
        CHECK(r.exit_code == 5);
        CHECK(std::filesystem::exists(field));
        const json rep = json::parse(r.out);
        CHECK(!rep["converged"].get<bool>());
    }
    SUBCASE("diffeomorphic integration defaults to seven steps") {
        const std::string kp = write_text("kp3.csv", "8,8,11,8\n48,48,51,48\n");
        const CliResult r = run_cli("register --fixed " + fixed + " --keypoints " + kp +
                                    " --out " + field +
                                    " --diffeo --tol 1e-8 --max-iter 200000");
        CHECK(r.exit_code == 0);
        const json rep = json::parse(r.out);
        CHECK(rep["diffeomorphic"].get<bool>());
        CHECK(rep["integration_steps"].get<int>() == 7);
    }
}

TEST_CASE("warp subcommand") {
    const std::string image = make_pgm("warpme.pgm", 32);
    const std::string out = work_dir() + "/warped.pgm";

    SUBCASE("zero field reproduces the image bytes") {
        const std::string field = work_dir() + "/zero.bt";
        bgrid::write_tensor(bgrid::Tensor({2, 32, 32}), field);
        const CliResult r =
            run_cli("warp --image " + image + " --field " + field + " --out " + out);
        CHECK(r.exit_code == 0);
        CHECK(slurp(out) == slurp(image));
    }
    SUBCASE("integer shift moves the edge") {
        const std::string field = work_dir() + "/shift.bt";
        bgrid::Tensor v({2, 32, 32});
        for (std::size_t i = 32 * 32; i < 2 * 32 * 32; ++i) v[i] = 4.0;  // +4 along axis 1
        bgrid::write_tensor(v, field);
        const CliResult r =
            run_cli("warp --image " + image + " --field " + field + " --out " + out);
        CHECK(r.exit_code == 0);
        const bgrid::Image warped = bgrid::read_image(out);
        const bgrid::Image orig = bgrid::read_image(image);
        // edge at column 16 moves left by 4
        CHECK(warped.tensor[5 * 32 + 12] == orig.tensor[5 * 32 + 16]);
    }
    SUBCASE("mismatched extents exit 2") {
        const std::string field = work_dir() + "/small.bt";
        bgrid::write_tensor(bgrid::Tensor({2, 16, 16}), field);
        const CliResult r =
            run_cli("warp --image " + image + " --field " + field + " --out " + out);
        CHECK(r.exit_code == 2);
    }
}

TEST_CASE("metrics subcommand") {
    const std::string mask = make_pgm("mask.pgm", 24, 0, 255);

    SUBCASE("identical masks") {
        const CliResult r = run_cli("metrics --mask-a " + mask + " --mask-b " + mask +
                                    " --select dice,hd95");
        CHECK(r.exit_code == 0);
        const json rep = json::parse(r.out);
        CHECK(rep["dice"].get<double>() == 1.0);
        CHECK(rep["hd95"].get<double>() == 0.0);
    }
    SUBCASE("zero field metrics") {
        const std::string field = work_dir() + "/f.bt";
        bgrid::write_tensor(bgrid::Tensor({2, 24, 24}), field);
        const CliResult r =
            run_cli("metrics --field " + field + " --select sdlogj,folds,smoothness");
        CHECK(r.exit_code == 0);
        const json rep = json::parse(r.out);
        CHECK(rep["sdlogj"].get<double>() == 0.0);
        CHECK(rep["folds"].get<int>() == 0);
        CHECK(rep["smoothness"].get<double>() == 0.0);
    }
    SUBCASE("selected metric without inputs exits 2") {
        const CliResult r = run_cli("metrics --select tre");
        CHECK(r.exit_code == 2);
    }
    SUBCASE("mse between images") {
        const std::string a = make_pgm("ma.pgm", 16, 0, 0);
        const std::string b = make_pgm("mb.pgm", 16, 255, 255);
        const CliResult r =
            run_cli("metrics --image-a " + a + " --image-b " + b + " --select mse");
        CHECK(r.exit_code == 0);
        CHECK(json::parse(r.out)["mse"].get<double>() == doctest::Approx(1.0));
    }
}

TEST_CASE("bench subcommand is seed-deterministic") {
    const std::string out1 = work_dir() + "/bench1.json";
    const std::string out2 = work_dir() + "/bench2.json";
    const std::string flags = " --size 48 --sigma-s 4 --seed 7 --rates 2,4 --repeats 1";
    CHECK(run_cli("bench --out " + out1 + flags).exit_code == 0);
    CHECK(run_cli("bench --out " + out2 + flags).exit_code == 0);

    const json a = json::parse(slurp(out1));
    const json b = json::parse(slurp(out2));
    REQUIRE(a["rows"].size() == 2);
    for (std::size_t i = 0; i < a["rows"].size(); ++i) {
        // accuracy columns are bit-identical; timings may differ
        CHECK(a["rows"][i]["rel_rms"].get<double>() ==
              b["rows"][i]["rel_rms"].get<double>());
        CHECK(a["rows"][i]["range_bins"] == b["rows"][i]["range_bins"]);
        CHECK(a["rows"][i]["speedup"].get<double>() > 1.0);
    }
}
