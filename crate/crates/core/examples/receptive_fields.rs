//! Symbolic receptive fields of VGG16 and of the model towers, plus a
//! gradient-probe map for a conv stack and a spectral layer.

use s3fnet::analysis::{empirical_rf_of_nodes, receptive_field, PoolRf};
use s3fnet::models::{family_spec, vgg16_spec, ArchConfig, LayerNode, ModelFamily};
use s3fnet::spectral::SpectralInit;

fn draw(mask: &[Vec<bool>]) {
    for row in mask {
        println!("  {}", row.iter().map(|&m| if m { '#' } else { '.' }).collect::<String>());
    }
}

fn main() -> s3fnet::Result<()> {
    for pool in [PoolRf::StrideOnly, PoolRf::Window] {
        let r = &receptive_field(&vgg16_spec(), pool)?[0];
        println!("VGG16 ({pool:?}): block RFs {:?}", r.block_rfs());
    }

    let spec = family_spec(ModelFamily::S3fConcat, [32, 32, 1], 4, &ArchConfig::default(), 0)?;
    for r in receptive_field(&spec, PoolRf::StrideOnly)? {
        let last = r.layers.last().unwrap();
        println!("{} tower: final {:?}, global {}", r.tower, r.final_rf(), last.global);
    }

    println!("two 3x3 convs, output pixel (6, 6):");
    draw(&empirical_rf_of_nodes(&[LayerNode::conv(3, 2), LayerNode::conv(3, 2)], [12, 12, 1], (6, 6), 0)?);
    let spectral = LayerNode::SpectralFilter {
        out_channels: 2,
        init: SpectralInit::Direct,
    };
    println!("one spectral layer, output pixel (6, 6):");
    draw(&empirical_rf_of_nodes(&[spectral], [12, 12, 1], (6, 6), 0)?);
    Ok(())
}
