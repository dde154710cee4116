#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "crovca/crovca.hpp"

#ifndef CROVCA_CLI_PATH
#error "CROVCA_CLI_PATH must point at the crovca executable"
#endif

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = fs::temp_directory_path() / "crovca_cli_test";
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        ASSERT_EQ(run("synth --out-dir " + dir_.string() + " --dim 16 --clusters 4 --train 300 --db 200 --query 40 --seed 3"), 0);
    }
    static void TearDownTestSuite() { fs::remove_all(dir_); }

    static std::string path(const std::string& name) { return (dir_ / name).string(); }

    static int run(const std::string& args, const std::string& stdout_file = "") {
        std::string cmd = std::string(CROVCA_CLI_PATH) + " " + args;
        cmd += stdout_file.empty() ? " > /dev/null 2>&1" : " > " + stdout_file + " 2>/dev/null";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    static std::string slurp(const std::string& file) {
        std::ifstream in(file, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    static std::string train_flags(const std::string& out) {
        return "train --views " + path("train.cvca") + " --bits 8 --epochs 2 --batch 64 --width 32 --seed 9 --out " + out;
    }

    static inline fs::path dir_;
};

} // namespace

TEST_F(Cli, HelpExitsZero) { EXPECT_EQ(run("--help"), 0); }

TEST_F(Cli, SupervisedWithoutLabelsExitsTwo) {
    EXPECT_EQ(run("train --mode sup --views " + path("train.cvca") + " --out " + path("x.cvck")), 2);
}

TEST_F(Cli, UnknownFlagExitsTwo) { EXPECT_EQ(run("train --bogus"), 2); }

TEST_F(Cli, MissingFileExitsTwo) {
    EXPECT_EQ(run("encode --model " + path("none.cvck") + " --input " + path("db.cvca") + " --out " + path("o.cvcd")), 2);
}

TEST_F(Cli, SameFlagsSameCheckpoint) {
    ASSERT_EQ(run(train_flags(path("a.cvck"))), 0);
    ASSERT_EQ(run(train_flags(path("b.cvck"))), 0);
    const auto a = slurp(path("a.cvck"));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(path("b.cvck")));
}

TEST_F(Cli, PipelineAndDirectEvalAgree) {
    ASSERT_EQ(run(train_flags(path("m.cvck"))), 0);
    ASSERT_EQ(run("encode --model " + path("m.cvck") + " --input " + path("db.cvca") + " --out " + path("db.cvcd")), 0);
    EXPECT_EQ(run("query --db " + path("db.cvcd") + " --queries " + path("query.cvca") + " --model " + path("m.cvck") +
                  " --k 0"),
              2);

    const std::string labels = " --query-labels " + path("query.cvlb") + " --db-labels " + path("db.cvlb");
    const std::string metrics = " --metric map@100 --metric recall@1";
    const std::string piped = std::string(CROVCA_CLI_PATH) + " query --db " + path("db.cvcd") + " --queries " +
                              path("query.cvca") + " --model " + path("m.cvck") + " --k 100 | " + CROVCA_CLI_PATH +
                              " eval --rankings -" + labels + metrics + " > " + path("piped.txt");
    ASSERT_EQ(std::system(piped.c_str()), 0);
    ASSERT_EQ(run("eval --db " + path("db.cvcd") + " --queries " + path("query.cvca") + " --model " + path("m.cvck") +
                      labels + metrics,
                  path("direct.txt")),
              0);
    const auto direct = slurp(path("direct.txt"));
    EXPECT_NE(direct.find("metric=map@100 k=100 value="), std::string::npos);
    EXPECT_EQ(slurp(path("piped.txt")), direct);
}

TEST_F(Cli, SymbceNeedsLogits) {
    ASSERT_EQ(run(train_flags(path("s.cvck"))), 0);
    ASSERT_EQ(run("encode --model " + path("s.cvck") + " --input " + path("db.cvca") + " --out " + path("plain.cvcd")), 0);
    EXPECT_EQ(run("query --db " + path("plain.cvcd") + " --queries " + path("query.cvca") + " --model " + path("s.cvck") +
                  " --measure symbce"),
              2);
    ASSERT_EQ(run("encode --logits --model " + path("s.cvck") + " --input " + path("db.cvca") + " --out " +
                  path("rich.cvcd")),
              0);
    EXPECT_TRUE(crovca::read_codes(path("rich.cvcd")).has_logits());
    EXPECT_EQ(run("query --db " + path("rich.cvcd") + " --queries " + path("query.cvca") + " --model " + path("s.cvck") +
                  " --measure symbce --k 5"),
              0);
}

TEST_F(Cli, StatsAndCsvImport) {
    ASSERT_EQ(run(train_flags(path("t.cvck"))), 0);
    ASSERT_EQ(run("encode --model " + path("t.cvck") + " --input " + path("db.cvca") + " --out " + path("t.cvcd")), 0);
    ASSERT_EQ(run("stats --codes " + path("t.cvcd"), path("stats.txt")), 0);
    EXPECT_EQ(slurp(path("stats.txt")).rfind("rows=200 bits=8 unique=", 0), 0u);

    std::ofstream(path("x.csv")) << "1,2\n3,4\n";
    ASSERT_EQ(run("import-csv --in " + path("x.csv") + " --out " + path("x.cvca")), 0);
    EXPECT_EQ(crovca::read_embeddings(path("x.cvca")), crovca::DenseMatrix::from_rows({{1, 2}, {3, 4}}));
}
