#include <CLI11.hpp>

#include <iostream>

#include "efc/datagen.hpp"

// Stand-in data generator: emits CIFAR-10-binary-format files with synthetic
// ten-class pattern images, so the full pipeline runs without downloading the
// real dataset. Real CIFAR-10 .bin files are drop-in replacements.
int main(int argc, char** argv) {
    CLI::App app{"efc-datagen: synthetic CIFAR-10-binary dataset generator"};
    std::string out_dir;
    int64_t train_n = 10000, test_n = 2000;
    uint64_t seed = 42;
    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--train", train_n, "training image count");
    app.add_option("--test", test_n, "test image count");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    try {
        efc::write_synthetic_cifar10(out_dir + "/train.bin", train_n, seed);
        efc::write_synthetic_cifar10(out_dir + "/test.bin", test_n, seed + 1);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    std::cout << "wrote " << train_n << " train + " << test_n << " test records to " << out_dir
              << std::endl;
    return 0;
}
