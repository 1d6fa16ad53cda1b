//! Benchmark networks shipped with the toolkit.

use std::fmt;
use std::str::FromStr;

use crate::model::{parse_network, ModelError, ReactionNetwork};

/// Decaying dimerization, non-stiff rates.
pub const DIMER_NONSTIFF: &str = "\
# decaying dimerization, non-stiff rates
species S1 S2 S3
init 4150 39565 3445
reaction R1 : S1 -> 0        ; rate 1.0
reaction R2 : 2 S1 -> S2     ; rate 0.002
reaction R3 : S2 -> 2 S1     ; rate 0.5
reaction R4 : S2 -> S3       ; rate 0.04
reversible R2 R3
";

/// Decaying dimerization with a fast reversible pair.
pub const DIMER_STIFF: &str = "\
# decaying dimerization, stiff rates
species S1 S2 S3
init 4150 39565 3445
reaction R1 : S1 -> 0        ; rate 1.0
reaction R2 : 2 S1 -> S2     ; rate 10.0
reaction R3 : S2 -> 2 S1     ; rate 1000.0
reaction R4 : S2 -> S3       ; rate 0.1
reversible R2 R3
";

/// Bacillus subtilis differentiation: S1 = Spo0A, S2 = ComG, S3 = sinI.
pub const BSUBTILIS: &str = "\
# Bacillus subtilis cellular differentiation
species S1 S2 S3
init 300 150 200
reaction R1 : 0 -> S1 + 3 S3      ; rate 0.151
reaction R2 : S1 + S2 -> 4 S3     ; rate 3.1e-4
reaction R3 : S2 -> 4 S3          ; rate 3.4e-3
reaction R4 : S3 -> S1 + S2       ; rate 2.0e-2
reaction R5 : S1 + 2 S2 -> 0      ; rate 6.2e-5
reaction R6 : 2 S1 -> S1 + S2     ; rate 4.9e-4
";

const LACZ_BODY: &str = "\
species PLac RNAP PLacRNAP TrLacZ1 RbsLacZ TrLacZ2 TrLacY1 RbsLacY TrLacY2 Ribosome RbsribosomeLacZ RbsribosomeLacY TrRbsLacZ TrRbsLacY LacZ LacY dgrLacZ dgrLacY dgrRbsLacZ dgrRbsLacY lactose LacZlactose product
reaction R1 : PLac + RNAP -> PLacRNAP                 ; rate 0.17
reaction R2 : PLacRNAP -> PLac + RNAP                 ; rate 10
reaction R3 : PLacRNAP -> TrLacZ1                     ; rate 1
reaction R4 : TrLacZ1 -> RbsLacZ + PLac + TrLacZ2     ; rate 1
reaction R5 : TrLacZ2 -> TrLacY1                      ; rate 0.015
reaction R6 : TrLacY1 -> RbsLacY + TrLacY2            ; rate 1
reaction R7 : TrLacY2 -> RNAP                         ; rate 0.36
reaction R8 : Ribosome + RbsLacZ -> RbsribosomeLacZ   ; rate 0.17
reaction R9 : RbsribosomeLacZ -> Ribosome + RbsLacZ   ; rate 0.45
reaction R10 : Ribosome + RbsLacY -> RbsribosomeLacY  ; rate 0.17
reaction R11 : RbsribosomeLacY -> Ribosome + RbsLacY  ; rate 0.45
reaction R12 : RbsribosomeLacZ -> TrRbsLacZ + RbsLacZ ; rate 0.4
reaction R13 : RbsribosomeLacY -> TrRbsLacY + RbsLacY ; rate 0.4
reaction R14 : TrRbsLacZ -> LacZ                      ; rate 0.015
reaction R15 : TrRbsLacY -> LacY                      ; rate 0.036
reaction R16 : LacZ -> dgrLacZ                        ; rate 6.42e-5
reaction R17 : LacY -> dgrLacY                        ; rate 6.42e-5
reaction R18 : RbsLacZ -> dgrRbsLacZ                  ; rate 0.3
reaction R19 : RbsLacY -> dgrRbsLacY                  ; rate 0.3
reaction R20 : LacZ + lactose -> LacZlactose          ; rate 9.52e-5
reaction R21 : LacZlactose -> product + LacZ          ; rate 431
reaction R22 : LacY -> lactose + LacY                 ; rate 14
reversible R1 R2
reversible R8 R9
reversible R10 R11
volume tgen=2100
resample RNAP mean=35 sd=3.5
resample Ribosome mean=350 sd=35
";

/// Species whose errors are averaged for the LacZ/LacY benchmarks.
pub const LACZ_TRACKED: [&str; 3] = ["TrLacZ2", "TrRbsLacZ", "RbsribosomeLacY"];

/// The benchmark models by identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinModel {
    DimerNonstiff,
    DimerStiff,
    Bsubtilis,
    LaczSmall,
    LaczBig,
}

impl BuiltinModel {
    pub const ALL: [BuiltinModel; 5] = [
        BuiltinModel::DimerNonstiff,
        BuiltinModel::DimerStiff,
        BuiltinModel::Bsubtilis,
        BuiltinModel::LaczSmall,
        BuiltinModel::LaczBig,
    ];

    pub fn id(self) -> &'static str {
        match self {
            BuiltinModel::DimerNonstiff => "dimer_nonstiff",
            BuiltinModel::DimerStiff => "dimer_stiff",
            BuiltinModel::Bsubtilis => "bsubtilis",
            BuiltinModel::LaczSmall => "lacz_small",
            BuiltinModel::LaczBig => "lacz_big",
        }
    }

    /// Model file contents.
    pub fn text(self) -> String {
        match self {
            BuiltinModel::DimerNonstiff => DIMER_NONSTIFF.to_string(),
            BuiltinModel::DimerStiff => DIMER_STIFF.to_string(),
            BuiltinModel::Bsubtilis => BSUBTILIS.to_string(),
            BuiltinModel::LaczSmall => {
                let init: Vec<&str> = (0..23).map(|i| if i == 0 { "1" } else { "0" }).collect();
                format!(
                    "# LacZ/LacY, small initial populations\n{LACZ_BODY}init {}\n",
                    init.join(" ")
                )
            }
            BuiltinModel::LaczBig => {
                let init: Vec<&str> = (0..23).map(|i| if i == 0 { "100" } else { "50" }).collect();
                format!(
                    "# LacZ/LacY, large initial populations\n{LACZ_BODY}init {}\n",
                    init.join(" ")
                )
            }
        }
    }

    pub fn network(self) -> ReactionNetwork {
        parse_network(&self.text()).expect("built-in model text parses")
    }

    /// Species averaged in the ensemble error, `None` for all species.
    pub fn tracked_species(self) -> Option<&'static [&'static str]> {
        match self {
            BuiltinModel::LaczSmall | BuiltinModel::LaczBig => Some(&LACZ_TRACKED),
            _ => None,
        }
    }
}

impl fmt::Display for BuiltinModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for BuiltinModel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BuiltinModel::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| ModelError::Syntax {
                line: 0,
                message: format!("unknown built-in model `{s}`"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_models_parse_and_round_trip() {
        for model in BuiltinModel::ALL {
            let net = model.network();
            let again = parse_network(&net.to_string()).unwrap();
            assert_eq!(net, again, "{model}");
        }
    }

    #[test]
    fn model_sizes_and_initial_states() {
        let dimer = BuiltinModel::DimerNonstiff.network();
        assert_eq!((dimer.num_reactions(), dimer.num_species()), (4, 3));
        assert_eq!(dimer.initial_populations(), &[4150, 39565, 3445]);
        assert_eq!(dimer.reversible_pairs(), &[(1, 2)]);

        let stiff = BuiltinModel::DimerStiff.network();
        let rates: Vec<f64> = stiff.reactions().iter().map(|r| r.rate).collect();
        assert_eq!(rates, vec![1.0, 10.0, 1000.0, 0.1]);

        let bsub = BuiltinModel::Bsubtilis.network();
        assert_eq!((bsub.num_reactions(), bsub.num_species()), (6, 3));
        assert_eq!(bsub.initial_populations(), &[300, 150, 200]);
        assert_eq!(bsub.reaction(4).order(), 3);

        let small = BuiltinModel::LaczSmall.network();
        assert_eq!((small.num_reactions(), small.num_species()), (22, 23));
        assert_eq!(small.initial_populations().iter().sum::<i64>(), 1);
        assert_eq!(small.initial_populations()[0], 1);

        let big = BuiltinModel::LaczBig.network();
        assert_eq!(big.initial_populations()[0], 100);
        assert!(big.initial_populations()[1..].iter().all(|&v| v == 50));
        assert_eq!(big.hooks().len(), 3);
        assert!(big.reaction(0).volume_scaled);
        assert!(!big.reaction(1).volume_scaled);
        for name in LACZ_TRACKED {
            assert!(big.species_index(name).is_some());
        }
    }

    #[test]
    fn ids_parse() {
        for model in BuiltinModel::ALL {
            assert_eq!(model.id().parse::<BuiltinModel>().unwrap(), model);
        }
        assert!("nope".parse::<BuiltinModel>().is_err());
    }
}
