//! Constants of the built-in kernels, computed by quadrature.

use repquant::{kernel_constants, KernelFamily, KernelSpec};

fn main() -> repquant::Result<()> {
    println!("{:<16} {:>3} {:>12} {:>12} {:>12} {:>12}", "family", "d", "normalizer", "phi", "psi", "phi_jk");
    for family in [KernelFamily::PaperRadial, KernelFamily::ProductBiweight] {
        for d in 1..=3 {
            let c = kernel_constants(family, d)?;
            let spec = KernelSpec::new(family, d)?;
            println!(
                "{:<16} {d:>3} {:>12.8} {:>12.8} {:>12.8} {:>12.8}",
                format!("{family:?}"),
                c.normalizer,
                c.phi,
                c.psi,
                spec.phi_jackknife()
            );
        }
    }
    Ok(())
}
