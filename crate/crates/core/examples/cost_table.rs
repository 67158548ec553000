//! Parameter and multiply-accumulate counts per model family, and the
//! depthwise-separable saving.

use s3fnet::analysis::{count_params_flops, depthwise_param_ratio, depthwise_ratio_closed_form};
use s3fnet::models::{family_spec, ArchConfig, ModelFamily};

fn main() -> s3fnet::Result<()> {
    let arch = ArchConfig::default();
    println!("{:<14} {:>10} {:>10} {:>14}", "family", "params", "buffers", "MACs");
    for family in [
        ModelFamily::Spatial,
        ModelFamily::Spectranet1,
        ModelFamily::Spectranet2,
        ModelFamily::S3fConcat,
        ModelFamily::S3fBilinear,
    ] {
        let c = count_params_flops(&family_spec(family, [32, 32, 1], 4, &arch, 0)?)?;
        let name = serde_json::to_value(family)?;
        println!(
            "{:<14} {:>10} {:>10} {:>14.0}",
            name.as_str().unwrap_or("?"),
            c.total_params,
            c.total_buffers,
            c.total_macs
        );
    }

    println!("\ndepthwise-separable / standard conv weights:");
    for (k, cin, cout) in [(3, 32, 48), (3, 48, 64), (5, 16, 128)] {
        let r = depthwise_param_ratio(k, cin, cout);
        assert_eq!(r, depthwise_ratio_closed_form(k, cout));
        println!("  K={k} Cin={cin} Cout={cout}: {r} = {:.4}", r.to_f64());
    }
    Ok(())
}
