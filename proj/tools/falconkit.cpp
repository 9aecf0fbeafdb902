#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "falcon/falcon.hpp"

int main(int argc, char** argv) {
    CLI::App app{"convolution kernel factorization toolkit"};
    app.require_subcommand(1);

    const std::map<std::string, falcon::FitMethod> methods{
        {"svd", falcon::FitMethod::svd},
        {"iterative", falcon::FitMethod::iterative},
    };
    const std::map<std::string, falcon::FitOrientation> orientations{
        {"falcon", falcon::FitOrientation::falcon},
        {"dpconv", falcon::FitOrientation::dpconv},
    };
    const std::map<std::string, falcon::FitInit> inits{
        {"warm_svd", falcon::FitInit::warm_svd},
        {"random", falcon::FitInit::random},
    };

    falcon::CompressOptions co;
    CLI::App* compress = app.add_subcommand("compress", "Factorize the kernel K of a tensor file");
    compress->add_option("input", co.input, "tensor file holding K")->required();
    compress->add_option("-o,--output", co.output, "factor file to write")->required();
    compress->add_option("--rank", co.rank, "factor pairs per output channel");
    compress->add_option("--method", co.method, "fitting method")
        ->transform(CLI::CheckedTransformer(methods, CLI::ignore_case));
    compress->add_option("--orientation", co.orientation, "factor orientation")
        ->transform(CLI::CheckedTransformer(orientations, CLI::ignore_case));
    compress->add_option("--init", co.init, "iterative start point")
        ->transform(CLI::CheckedTransformer(inits, CLI::ignore_case));
    compress->add_option("--lr", co.learning_rate, "iterative step size");
    compress->add_option("--iters", co.max_iters, "iteration cap");
    compress->add_option("--tol", co.tolerance, "relative residual-change stop");
    compress->add_option("--seed", co.seed, "random init seed");

    falcon::ReconstructOptions ro;
    CLI::App* reconstruct =
        app.add_subcommand("reconstruct", "Expand a factor file into a full kernel");
    reconstruct->add_option("factors", ro.factors, "factor file")->required();
    reconstruct->add_option("-o,--output", ro.output, "kernel file to write")->required();

    falcon::VerifyOptions vo;
    CLI::App* verify = app.add_subcommand("verify", "Compare factors against a kernel");
    verify->add_option("kernel", vo.kernel, "tensor file holding K")->required();
    verify->add_option("factors", vo.factors, "factor file")->required();
    verify->add_option("--tol", vo.tolerance, "relative residual bound");

    falcon::ForwardOptions fo;
    CLI::App* forward = app.add_subcommand("forward", "Run one layer on an input tensor");
    forward->add_option("model", fo.model, "kernel or factor file")->required();
    forward->add_option("input", fo.input, "tensor file holding I")->required();
    forward->add_option("-o,--output", fo.output, "tensor file to write O")->required();
    forward->add_option("--stride", fo.stride, "window step");
    forward->add_option("--pad", fo.padding, "zero padding per border");

    falcon::RatesOptions ra;
    CLI::App* rates = app.add_subcommand("rates", "Exact counts and reduction ratios");
    rates->add_option("--D", ra.dims.kernel_size, "window size")->required();
    rates->add_option("--M", ra.dims.in_channels, "input channels")->required();
    rates->add_option("--N", ra.dims.out_channels, "output channels")->required();
    rates->add_option("--H", ra.dims.in_height, "input height")->required();
    rates->add_option("--W", ra.dims.in_width, "input width")->required();
    rates->add_option("--s", ra.dims.stride, "stride");
    rates->add_option("--p", ra.dims.padding, "padding");
    rates->add_option("--k", ra.rank, "factor pairs per output channel");

    falcon::AnalyzeOptions ao;
    CLI::App* analyze = app.add_subcommand("analyze", "Account a whole architecture");
    analyze->add_option("config", ao.config, "architecture config file")->required();
    analyze->add_option("--conv", ao.conv_override, "override every layer's conv type");
    analyze->add_option("--k", ao.rank_override, "override every layer's rank");
    analyze->add_option("--csv", ao.csv, "also write a per-layer CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? falcon::exit_ok : falcon::exit_input_error;
    }

    if (compress->parsed())
        return falcon::cmd_compress(co, std::cout, std::cerr);
    if (reconstruct->parsed())
        return falcon::cmd_reconstruct(ro, std::cout, std::cerr);
    if (verify->parsed())
        return falcon::cmd_verify(vo, std::cout, std::cerr);
    if (forward->parsed())
        return falcon::cmd_forward(fo, std::cout, std::cerr);
    if (rates->parsed())
        return falcon::cmd_rates(ra, std::cout, std::cerr);
    if (analyze->parsed())
        return falcon::cmd_analyze(ao, std::cout, std::cerr);
    return falcon::exit_input_error;
}
