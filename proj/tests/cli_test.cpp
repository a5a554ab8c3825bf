#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <unistd.h>

#include "forge/cli.hpp"

namespace forge {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

const std::string kGraphs = std::string(FORGE_SOURCE_DIR) + "/graphs/";

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome forge_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "forge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("forge-cli-" + std::to_string(::getpid()) + "-" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const std::vector<std::string> kSmallTrain = {"--synthetic", "n=10,dim=64,m=20,spread=0.15", "--batch", "20",
                                              "--steps",     "60",                          "--eval-every",
                                              "20",          "--eval-batch",                "20"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

TEST_F(CliTest, ParseReferenceGraph) {
  const auto r = forge_cli({"parse", kGraphs + "mnist_softmax.graph"});
  EXPECT_EQ(r.code, cli::kOk);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "6 nodes");
  EXPECT_NE(r.out.find("probs [?, 10]"), std::string::npos);
  EXPECT_TRUE(r.err.empty());
}

TEST_F(CliTest, ParseErrorsGoToStderrWithExitOne) {
  std::ofstream(path("bad.graph")) << "graph \"b\" {\n  node z = conv(x);\n}\n";
  const auto r = forge_cli({"parse", path("bad.graph")});
  EXPECT_EQ(r.code, cli::kValidationError);
  EXPECT_TRUE(r.out.empty());
  EXPECT_NE(r.err.find(":2:12"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingFileIsExitTwo) {
  const auto r = forge_cli({"parse", path("absent.graph")});
  EXPECT_EQ(r.code, cli::kIoError);
  EXPECT_NE(r.err.find("absent.graph"), std::string::npos);
}

TEST_F(CliTest, UnknownFlagIsExitOne) {
  EXPECT_EQ(forge_cli({"train", "--graph", kGraphs + "blobs_softmax.graph", "--bogus"}).code, cli::kValidationError);
  EXPECT_EQ(forge_cli({}).code, cli::kValidationError);
}

TEST_F(CliTest, TrainTwiceGivesIdenticalCsv) {
  const auto a = forge_cli(with({"train", "--graph", kGraphs + "blobs_mlp.graph", "--out", path("a.csv")}, kSmallTrain));
  const auto b = forge_cli(with({"train", "--graph", kGraphs + "blobs_mlp.graph", "--out", path("b.csv")}, kSmallTrain));
  ASSERT_EQ(a.code, cli::kOk) << a.err;
  ASSERT_EQ(b.code, cli::kOk) << b.err;
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(a.out, b.out);
  const std::string csv = slurp(path("a.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,split,batch_size,accuracy,infoacc");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);  // header plus train/eval at 20, 40, 60
  EXPECT_NE(a.out.find("final_step 60\n"), std::string::npos);
  EXPECT_NE(a.out.find(" bits\n"), std::string::npos);
}

TEST_F(CliTest, TrainRejectsBadConfig) {
  const auto r = forge_cli({"train", "--graph", kGraphs + "blobs_softmax.graph", "--synthetic", "n=10,dim=64,m=20",
                            "--steps", "10", "--eval-every", "20"});
  EXPECT_EQ(r.code, cli::kValidationError);
  EXPECT_NE(r.err.find("eval_interval"), std::string::npos) << r.err;
}

TEST_F(CliTest, TrainRejectsIncompatibleGraph) {
  const auto r = forge_cli(with({"train", "--graph", kGraphs + "mnist_softmax.graph"}, kSmallTrain));
  EXPECT_EQ(r.code, cli::kValidationError);
}

TEST_F(CliTest, TrainOnIdxFiles) {
  // 10 rows of 2x2 images: class k%2 lights pixel k%2.
  std::vector<std::uint8_t> img, lab;
  idx::put_be32(img, idx::kImageMagic);
  for (std::uint32_t v : {10u, 2u, 2u}) idx::put_be32(img, v);
  idx::put_be32(lab, idx::kLabelMagic);
  idx::put_be32(lab, 10);
  for (int k = 0; k < 10; ++k) {
    for (int p = 0; p < 4; ++p) img.push_back(p == k % 2 ? 255 : 0);
    lab.push_back(static_cast<std::uint8_t>(k % 2));
  }
  idx::write_file(path("img"), img);
  idx::write_file(path("lab"), lab);
  std::ofstream(path("tiny.graph")) << "graph \"t\" { input x: [?, 4]; param W: [4, 2] init = zeros;"
                                       " node l = matmul(x, W); node p = softmax(l); output p;"
                                       " loss cross_entropy(p); }";
  const auto r = forge_cli({"train", "--graph", path("tiny.graph"), "--idx-images", path("img"), "--idx-labels",
                            path("lab"), "--classes", "2", "--batch", "4", "--steps", "50", "--eval-every", "10",
                            "--eval-batch", "2"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("final_accuracy 1.000000"), std::string::npos) << r.out;
}

TEST_F(CliTest, SelfBattleIsDraw) {
  const auto r = forge_cli(with({"battle", kGraphs + "blobs_softmax.graph", kGraphs + "blobs_softmax.graph"}, kSmallTrain));
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j.at("winner"), "draw");
  EXPECT_EQ(j.at("config").at("priority"), json::parse(R"(["accuracy", "infoacc"])"));
}

TEST_F(CliTest, BattlePriorityFlag) {
  const auto r = forge_cli(with({"battle", kGraphs + "blobs_softmax.graph", kGraphs + "blobs_dead.graph",
                                 "--priority", "infoacc", "accuracy"},
                                kSmallTrain));
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(json::parse(r.out).at("config").at("priority"), json::parse(R"(["infoacc", "accuracy"])"));
  EXPECT_EQ(forge_cli(with({"battle", kGraphs + "blobs_softmax.graph", kGraphs + "blobs_dead.graph", "--priority",
                            "speed"},
                           kSmallTrain))
                .code,
            cli::kValidationError);
}

TEST_F(CliTest, ComplexityJson) {
  const auto r = forge_cli({"complexity", "--graph", kGraphs + "mnist_softmax.graph", "--ncd",
                            kGraphs + "mnist_mlp.graph"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j.at("node_count"), 6);
  EXPECT_EQ(j.at("compressed_bits"), 1320);
  EXPECT_TRUE(j.at("ncd_to_reference").is_number());
  EXPECT_TRUE(forge_cli({"complexity", "--graph", kGraphs + "mnist_softmax.graph"}).out.find("null") !=
              std::string::npos);
}

TEST_F(CliTest, BinaryMatchesInProcessRun) {
  const std::string cmd = std::string(FORGE_CLI_PATH) + " parse " + kGraphs + "blobs_mlp.graph";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  std::string out;
  char buf[256];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = ::pclose(pipe);
  EXPECT_EQ(status, 0);
  EXPECT_EQ(out, forge_cli({"parse", kGraphs + "blobs_mlp.graph"}).out);
  EXPECT_EQ(out.substr(0, out.find('\n')), "16 nodes");
}

}  // namespace
}  // namespace forge
