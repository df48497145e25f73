// End-to-end tests of the emoseg binary (path injected via EMOSEG_BIN).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "emoseg/io.hpp"

namespace fsys = std::filesystem;

namespace {

const std::string kBin = EMOSEG_BIN;

int run(const std::string& args) {
    const int rc = std::system((kBin + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
}

fsys::path work_dir() {
    static const fsys::path p = [] {
        auto d = fsys::temp_directory_path() / "emoseg_cli_test";
        fsys::remove_all(d);
        fsys::create_directories(d);
        return d;
    }();
    return p;
}

std::string small_run_config() {
    static const std::string path = [] {
        const auto p = work_dir() / "small.cfg";
        std::ofstream f(p);
        f << "# tiny setup so CLI round trips stay fast\n"
             "H=32\nW=32\nT=2\nC=8\nr=2\nsteps=6\nbatch=1\n";
        return p.string();
    }();
    return path;
}

std::string read_file(const fsys::path& p) {
    const auto bytes = emoseg::io::detail::read_all(p.string());
    return std::string(bytes.begin(), bytes.end());
}

// dataset shared by the training tests; generated once
std::string shared_data() {
    static const std::string data = [] {
        const auto d = (work_dir() / "data").string();
        REQUIRE(run("gen --config " + small_run_config() + " --out " + d +
                    " --count 4 --test-count 2 --seed 5") == 0);
        REQUIRE(run("build-sup --data " + d) == 0);
        REQUIRE(run("build-sup --data " + d + " --source semantic") == 0);
        return d;
    }();
    return data;
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run("") == 1);                      // no subcommand
    CHECK(run("gen") == 1);                   // missing --out
    CHECK(run("frobnicate") == 1);            // unknown subcommand
    CHECK(run("train --data x") == 1);        // missing --out
}

TEST_CASE("gen with zero sequences still writes the manifests") {
    const auto d = (work_dir() / "empty").string();
    CHECK(run("gen --out " + d + " --count 0") == 0);
    CHECK(read_file(fsys::path(d) / "train.txt").empty());
    CHECK(read_file(fsys::path(d) / "test.txt").empty());
    CHECK(!read_file(fsys::path(d) / "config.txt").empty());
}

TEST_CASE("gen is reproducible byte for byte") {
    const auto a = (work_dir() / "gen_a").string(), b = (work_dir() / "gen_b").string();
    const std::string args = " --config " + small_run_config() + " --count 2 --seed 9";
    REQUIRE(run("gen --out " + a + args) == 0);
    REQUIRE(run("gen --out " + b + args) == 0);
    for (const char* rel :
         {"train.txt", "seq_000000/frames/000001.ppm", "seq_000000/events/000001.pgm",
          "seq_000001/masks/000000.pgm", "seq_000001/flow/000001.emot", "seq_000000/meta.txt"})
        CHECK(read_file(fsys::path(a) / rel) == read_file(fsys::path(b) / rel));
}

TEST_CASE("build-sup semantic reproduces the ground-truth masks") {
    const auto d = fsys::path(shared_data());
    for (const char* seq : {"seq_000000", "seq_000004"})  // one train, one test
        for (const char* f : {"000000.pgm", "000001.pgm"})
            CHECK(read_file(d / seq / "sup_semantic" / f) == read_file(d / seq / "masks" / f));
}

TEST_CASE("--no-dilate maps the dilated sources onto their plain variants") {
    const auto d = shared_data();
    REQUIRE(run("build-sup --data " + d + " --source event_gt_dilated --no-dilate") == 0);
    const auto probe = fsys::path(d) / "seq_000000" / "sup_event_gt" / "000001.pgm";
    const std::string first = read_file(probe);
    REQUIRE(run("build-sup --data " + d + " --source event_gt") == 0);
    CHECK(read_file(probe) == first);
}

TEST_CASE("build-sup on a bad dataset exits with code 2") {
    const auto d = (work_dir() / "bad_data").string();
    fsys::create_directories(d);
    CHECK(run("build-sup --data " + d) == 2);  // no manifests at all
}

TEST_CASE("train / eval / infer round trip") {
    const auto d = shared_data();
    const auto out = (work_dir() / "run1").string();
    REQUIRE(run("train --data " + d + " --config " + small_run_config() + " --out " + out) == 0);
    const auto ckpt = out + "/checkpoint.emoc";
    REQUIRE(fsys::exists(ckpt));

    SUBCASE("loss log has the expected rows") {
        std::ifstream log(out + "/loss.csv");
        std::string header, row;
        REQUIRE(std::getline(log, header));
        CHECK(header == "step,L_sem,L_ST");
        int rows = 0;
        while (std::getline(log, row)) ++rows;
        CHECK(rows == 2);  // step 0 and the final step of a 6-step run
    }

    SUBCASE("training is bitwise reproducible") {
        const auto out2 = (work_dir() / "run1b").string();
        REQUIRE(run("train --data " + d + " --config " + small_run_config() + " --out " + out2) ==
                0);
        CHECK(read_file(out2 + "/loss.csv") == read_file(out + "/loss.csv"));
        CHECK(read_file(out2 + "/checkpoint.emoc") == read_file(ckpt));
    }

    SUBCASE("eval writes a report without touching events") {
        const auto rep = (work_dir() / "rep.txt").string();
        REQUIRE(run("eval --data " + d + " --ckpt " + ckpt + " --report " + rep) == 0);
        const std::string text = read_file(rep);
        CHECK(text.find("JandF") != std::string::npos);
        CHECK(read_file(rep + ".csv").find("frame_id,J,F") == 0);
    }

    SUBCASE("infer consumes bare frames and writes one mask per frame") {
        const auto masks = (work_dir() / "pred").string();
        REQUIRE(run("infer --frames " + d + "/seq_000004/frames --ckpt " + ckpt + " --out " +
                    masks) == 0);
        CHECK(fsys::exists(fsys::path(masks) / "000000.pgm"));
        CHECK(fsys::exists(fsys::path(masks) / "000001.pgm"));
    }

    SUBCASE("eval with a missing checkpoint exits with code 2") {
        CHECK(run("eval --data " + d + " --ckpt " + out + "/nope.emoc") == 2);
    }
}

TEST_CASE("--no-prior trains without supervision maps and logs L_ST = 0") {
    const auto d = (work_dir() / "data_nosup").string();
    REQUIRE(run("gen --config " + small_run_config() + " --out " + d +
                " --count 2 --test-count 1 --seed 2") == 0);
    // deliberately no build-sup: the baseline must not need it
    const auto out = (work_dir() / "run_base").string();
    REQUIRE(run("train --data " + d + " --config " + small_run_config() + " --out " + out +
                " --no-prior") == 0);
    std::ifstream log(out + "/loss.csv");
    std::string line;
    std::getline(log, line);  // header
    while (std::getline(log, line))
        CHECK(line.substr(line.rfind(',') + 1) == "0.000000");

    // with the prior enabled the same dataset must be rejected until build-sup runs
    CHECK(run("train --data " + d + " --config " + small_run_config() + " --out " + out) == 2);
}

TEST_CASE("gradcheck passes and bad EMOSEG_THREADS is a usage error") {
    CHECK(run("gradcheck --seed 3") == 0);
    const int rc = std::system(("EMOSEG_THREADS=zero " + kBin + " gradcheck >/dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(rc) == 1);
    const int rc2 = std::system(("EMOSEG_THREADS=1 " + kBin + " gradcheck >/dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(rc2) == 0);
}
