#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(DEFORMA_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("deforma_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

}  // namespace

TEST_F(Cli, ZeroOutputCheckpointRendersUniformGreyShells) {
  ASSERT_EQ(run("init --zero-output --out " + path("zero.fp01")), 0);
  ASSERT_EQ(run("render --ckpt " + path("zero.fp01") + " --size 8x8 --threads 1 --out " + path("img")), 0);
  const std::string ppm = slurp(path("img.ppm"));
  const std::string header = "P6\n8 8\n255\n";
  ASSERT_EQ(ppm.size(), header.size() + 8 * 8 * 3);
  // The centre ray crosses all four shells twice; every crossing has colour
  // and occupancy sigmoid(0) = 0.5 over a black background, so the pixel is
  // 0.5 * (1 - 0.5^8) = 0.498 -> byte 127.
  const std::size_t centre = header.size() + (4 * 8 + 4) * 3;
  for (int k = 0; k < 3; ++k) EXPECT_EQ(static_cast<unsigned char>(ppm[centre + k]), 127);
  // A corner ray misses every shell and shows the background.
  for (int k = 0; k < 3; ++k) EXPECT_EQ(static_cast<unsigned char>(ppm[header.size() + k]), 0);
}

TEST_F(Cli, RenderIsDeterministicAcrossRunsAndThreads) {
  ASSERT_EQ(run("init --seed 4 --out " + path("m.fp01")), 0);
  const std::string view = " --ckpt " + path("m.fp01") + " --size 12x10 --z-id-seed 2 --z-exp 0.3,0,0,-0.2 --depth";
  ASSERT_EQ(run("render" + view + " --threads 1 --out " + path("a")), 0);
  ASSERT_EQ(run("render" + view + " --threads 1 --out " + path("b")), 0);
  ASSERT_EQ(run("render" + view + " --threads 3 --out " + path("c")), 0);
  EXPECT_EQ(slurp(path("a.ppm")), slurp(path("b.ppm")));
  EXPECT_EQ(slurp(path("a.ppm")), slurp(path("c.ppm")));
  EXPECT_EQ(slurp(path("a.depth")), slurp(path("c.depth")));
}

TEST_F(Cli, SingleFrameAnimationMatchesRender) {
  ASSERT_EQ(run("init --seed 4 --out " + path("m.fp01")), 0);
  std::ofstream(path("track.txt")) << "# pitch yaw radius gamma\n0.1 -0.2 3 0.5 0 0 0\n";
  ASSERT_EQ(run("render --ckpt " + path("m.fp01") + " --size 8x8 --pose 0.1 -0.2 3 --z-exp 0.5,0,0,0 --out " +
                path("single")),
            0);
  ASSERT_EQ(run("animate --ckpt " + path("m.fp01") + " --size 8x8 --track " + path("track.txt") + " --out " +
                path("anim")),
            0);
  EXPECT_EQ(slurp(path("single.ppm")), slurp(path("anim/frame_0000.ppm")));
  EXPECT_NE(slurp(path("anim/animate.log")).find("frame_0000"), std::string::npos);
}

TEST_F(Cli, MakeBasisIsSeeded) {
  ASSERT_EQ(run("make-basis --seed 5 --vertices 64 --out " + path("a.fb01")), 0);
  ASSERT_EQ(run("make-basis --seed 5 --vertices 64 --out " + path("b.fb01")), 0);
  ASSERT_EQ(run("make-basis --seed 6 --vertices 64 --out " + path("c.fb01")), 0);
  EXPECT_EQ(slurp(path("a.fb01")), slurp(path("b.fb01")));
  EXPECT_NE(slurp(path("a.fb01")), slurp(path("c.fb01")));
}

TEST_F(Cli, FitWithoutStepsWritesItsOutputs) {
  ASSERT_EQ(run("fit --steps 0 --set resolution=8 --set eval_poses=1 --set eval_expressions=1 --out " +
                path("fit")),
            0);
  for (const char* f : {"config.txt", "loss_log.txt", "report.txt", "checkpoint.fp01"}) {
    EXPECT_TRUE(fs::exists(dir / "fit" / f)) << f;
  }
  EXPECT_NE(slurp(path("fit/config.txt")).find("resolution = 8"), std::string::npos);
  EXPECT_EQ(run("fit --steps 0 --set bogus=1 --out " + path("fit2")), 1);
}

TEST_F(Cli, GradcheckSucceeds) { EXPECT_EQ(run("gradcheck --params 10"), 0); }

TEST_F(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("render --out " + path("x")), 1);
  EXPECT_EQ(run("render --ckpt " + path("missing.fp01") + " --out " + path("x")), 1);
  ASSERT_EQ(run("init --out " + path("m.fp01")), 0);
  EXPECT_EQ(run("render --ckpt " + path("m.fp01") + " --size 8by8 --out " + path("x")), 1);
  std::ofstream(path("bad_track.txt")) << "0 0 3 0.1\nnot numbers\n";
  EXPECT_EQ(run("animate --ckpt " + path("m.fp01") + " --track " + path("bad_track.txt") + " --out " + path("a")), 1);
  EXPECT_EQ(run("init --manifold cubic --out " + path("n.fp01")), 1);
  EXPECT_EQ(run("--help"), 0);
}
