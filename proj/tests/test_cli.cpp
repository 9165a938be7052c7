#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "gcmc/checkpoint.hpp"
#include "support.hpp"

namespace gcmc {
namespace {

using testing::TempDir;

struct Outcome {
  int code = -1;
  std::string out, err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    // 30 users x 20 items; every fifth rating goes to the test file.
    Rng rng(1);
    const RatingDataset ds = testing::random_dataset(30, 20, 5, 0.3, rng);
    std::ostringstream train, test;
    for (std::size_t k = 0; k < ds.triples.size(); ++k) {
      const auto& r = ds.triples[k];
      const std::string line = std::to_string(r.user + 1) + "\t" + std::to_string(r.item + 1) + "\t" +
                               std::to_string(r.level + 1) + "\t881250949\n";
      (k % 5 == 4 ? test : train) << line;
      if (k % 5 != 4) train_lines_.push_back({r.user + 1, r.item + 1, r.level + 1});
    }
    dir_.write("toy.base", train.str());
    dir_.write("toy.test", test.str());
  }

  Outcome run(const std::string& args) const {
    const auto out = dir_.path() / "stdout.txt";
    const auto err = dir_.path() / "stderr.txt";
    const std::string cmd = std::string(GCMC_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  std::string data_args() const {
    return "--data_dir " + dir_.path().string() +
           " --train_file toy.base --test_file toy.test --users_file= --items_file=";
  }

  std::string small_model() const {
    return " --hidden_dim 20 --embed_dim 8 --quiet";
  }

  TempDir dir_;
  struct Triple {
    std::size_t user, item, rating;
  };
  std::vector<Triple> train_lines_;
};

TEST_F(Cli, MissingRatingsFileIsADataErrorNamingThePath) {
  const Outcome o = run("train --data_dir " + dir_.path().string() +
                        " --train_file nowhere.base --test_file toy.test --users_file= --items_file= --out " +
                        (dir_.path() / "o").string());
  EXPECT_EQ(o.code, 3) << o.err;
  EXPECT_NE(o.err.find("nowhere.base"), std::string::npos) << o.err;
}

TEST_F(Cli, UnknownKeyAndBadValueAreConfigErrors) {
  EXPECT_EQ(run("train " + data_args() + " --no_such_key 3").code, 2);
  EXPECT_EQ(run("train " + data_args() + " --epochs many").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST_F(Cli, ZeroEpochsWritesACheckpointAndAnEmptyLog) {
  const auto out = dir_.path() / "zero";
  const Outcome o = run("train " + data_args() + small_model() + " --epochs 0 --out " + out.string());
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(std::filesystem::exists(out / "model.ckpt"));
  EXPECT_EQ(slurp(out / "metrics.csv"), "epoch,train_loss,train_rmse,val_rmse,elapsed_seconds\n");
  EXPECT_NE(o.out.find("test_rmse "), std::string::npos);
  EXPECT_NO_THROW(load_checkpoint(out / "model.ckpt"));
}

TEST_F(Cli, PredictEdgeCases) {
  const auto out = dir_.path() / "p";
  ASSERT_EQ(run("train " + data_args() + small_model() + " --epochs 1 --out " + out.string()).code, 0);
  const std::string ckpt = (out / "model.ckpt").string();

  dir_.write("empty.tsv", "");
  Outcome o = run("predict --checkpoint " + ckpt + " --pairs " + (dir_.path() / "empty.tsv").string() +
                  " --out " + out.string());
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(slurp(out / "predictions.csv"), "user,item,expected_rating,p_1,p_2,p_3,p_4,p_5\n");

  dir_.write("unknown.tsv", "999\t1\n1\t1\n");
  o = run("predict --checkpoint " + ckpt + " --pairs " + (dir_.path() / "unknown.tsv").string() +
          " --out " + out.string());
  ASSERT_EQ(o.code, 0) << o.err;
  const std::string csv = slurp(out / "predictions.csv");
  EXPECT_NE(csv.find("\n999,1,error: unknown user id,,,,,\n"), std::string::npos) << csv;
  EXPECT_NE(o.err.find("warning"), std::string::npos);

  dir_.write("bad.tsv", "1\t2\t3\n");
  EXPECT_EQ(run("predict --checkpoint " + ckpt + " --pairs " + (dir_.path() / "bad.tsv").string()).code, 3);

  std::string bytes = slurp(ckpt);
  bytes[1] = 'X';
  dir_.write("corrupt.ckpt", bytes);
  o = run("predict --checkpoint " + (dir_.path() / "corrupt.ckpt").string() + " --pairs " +
          (dir_.path() / "empty.tsv").string());
  EXPECT_EQ(o.code, 5) << o.err;
  EXPECT_EQ(run("evaluate --checkpoint " + (dir_.path() / "corrupt.ckpt").string()).code, 5);
}

TEST_F(Cli, OverfitToyPredictsItsTrainingRatings) {
  const auto out = dir_.path() / "fit";
  const Outcome t = run("train " + data_args() + small_model() +
                        " --epochs 300 --node_dropout 0 --unit_dropout 0 --use_ema false --out " + out.string());
  ASSERT_EQ(t.code, 0) << t.err;
  std::ostringstream pairs;
  for (const auto& l : train_lines_) pairs << l.user << '\t' << l.item << '\n';
  dir_.write("train_pairs.tsv", pairs.str());
  const Outcome p = run("predict --checkpoint " + (out / "model.ckpt").string() + " --pairs " +
                        (dir_.path() / "train_pairs.tsv").string() + " --out " + out.string());
  ASSERT_EQ(p.code, 0) << p.err;
  std::istringstream csv(slurp(out / "predictions.csv"));
  std::string line;
  std::getline(csv, line);
  std::size_t k = 0, within = 0;
  while (std::getline(csv, line)) {
    std::istringstream fields(line);
    std::string user, item, expected;
    std::getline(fields, user, ',');
    std::getline(fields, item, ',');
    std::getline(fields, expected, ',');
    ASSERT_LT(k, train_lines_.size());
    EXPECT_EQ(std::stoul(user), train_lines_[k].user);
    if (std::abs(std::stod(expected) - static_cast<double>(train_lines_[k].rating)) < 0.2) ++within;
    ++k;
  }
  EXPECT_EQ(k, train_lines_.size());
  EXPECT_EQ(within, k);

  const Outcome e = run("evaluate --checkpoint " + (out / "model.ckpt").string() + " --out " + out.string());
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(slurp(out / "evaluation.txt").find("test_rmse = "), std::string::npos);
}

TEST_F(Cli, RepeatedRunsWriteIdenticalMetrics) {
  const std::string common = "train " + data_args() + small_model() +
                             " --epochs 15 --eval_every 5 --validation_fraction 0.2 --record_elapsed false";
  ASSERT_EQ(run(common + " --out " + (dir_.path() / "a").string()).code, 0);
  ASSERT_EQ(run(common + " --out " + (dir_.path() / "b").string()).code, 0);
  const std::string a = slurp(dir_.path() / "a" / "metrics.csv");
  EXPECT_EQ(a, slurp(dir_.path() / "b" / "metrics.csv"));
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 16);
}

}  // namespace
}  // namespace gcmc
