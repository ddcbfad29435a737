//! Layer <-> interface address codec.
//!
//! Every CNN layer is packed into a 2-byte "interface address". The 16-bit
//! address space is cut into four CIDR subnets, one per layer kind; the host
//! bits of an address carry the layer's hyperparameters:
//!
//! | kind            | subnet   | range          | payload layout                               |
//! |-----------------|----------|----------------|----------------------------------------------|
//! | Conv            | `0.0/4`  | 0.0 - 15.255   | filter(3) maps(7) stride(2)                  |
//! | Pool            | `16.0/5` | 16.0 - 23.255  | kernel(2) stride(2) type(1) placeholder(6)   |
//! | FullyConnected  | `24.0/5` | 24.0 - 31.255  | neurons(11)                                  |
//! | Disabled        | `32.0/5` | 32.0 - 39.255  | placeholder(11)                              |
//!
//! Numeric fields with range `[1, 2^b]` are stored as `value - 1`; pool type
//! is stored as `Max = 0`, `Average = 1`; placeholders are stored raw.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Total number of bits in an interface address.
pub const ADDRESS_BITS: u32 = 16;

/// Highest valid address value (`39.255`).
pub const MAX_VALID_ADDRESS: u16 = 0x27FF;

/// Number of valid addresses across all four subnets.
pub const VALID_ADDRESS_COUNT: usize = MAX_VALID_ADDRESS as usize + 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("field `{field}` = {value} is outside [{min}, {max}]")]
    Range {
        field: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("address {0} is outside every subnet (valid range 0.0-39.255)")]
    InvalidSubnet(InterfaceAddress),
    #[error("invalid particle: {0}")]
    InvalidParticle(String),
    #[error("cannot parse `{0}` as a dotted address")]
    Parse(String),
}

/// A 2-byte interface address, stored big-endian (high byte first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InterfaceAddress(u16);

impl InterfaceAddress {
    pub const fn from_u16(value: u16) -> Self {
        Self(value)
    }

    pub const fn from_bytes(hi: u8, lo: u8) -> Self {
        Self(((hi as u16) << 8) | lo as u16)
    }

    pub const fn value(self) -> u16 {
        self.0
    }

    pub const fn hi(self) -> u8 {
        (self.0 >> 8) as u8
    }

    pub const fn lo(self) -> u8 {
        self.0 as u8
    }

    pub const fn bytes(self) -> [u8; 2] {
        [self.hi(), self.lo()]
    }

    /// True when the address lies inside one of the four subnets.
    pub const fn is_valid(self) -> bool {
        self.0 <= MAX_VALID_ADDRESS
    }
}

impl fmt::Display for InterfaceAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `pad` so width and alignment flags apply to the whole address.
        f.pad(&format!("{}.{}", self.hi(), self.lo()))
    }
}

impl FromStr for InterfaceAddress {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || CodecError::Parse(s.to_string());
        let (hi, lo) = s.trim().split_once('.').ok_or_else(err)?;
        let hi: u8 = hi.parse().map_err(|_| err())?;
        let lo: u8 = lo.parse().map_err(|_| err())?;
        Ok(Self::from_bytes(hi, lo))
    }
}

/// The layer kind a subnet is reserved for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    Pool,
    FullyConnected,
    Disabled,
}

impl LayerKind {
    pub const ALL: [LayerKind; 4] = [
        LayerKind::Conv,
        LayerKind::Pool,
        LayerKind::FullyConnected,
        LayerKind::Disabled,
    ];

    pub const fn subnet(self) -> Subnet {
        match self {
            LayerKind::Conv => Subnet::CONV,
            LayerKind::Pool => Subnet::POOL,
            LayerKind::FullyConnected => Subnet::FULLY_CONNECTED,
            LayerKind::Disabled => Subnet::DISABLED,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Conv => "conv",
            LayerKind::Pool => "pool",
            LayerKind::FullyConnected => "full",
            LayerKind::Disabled => "disabled",
        })
    }
}

/// A CIDR block of the 16-bit address space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Subnet {
    kind: LayerKind,
    base: InterfaceAddress,
    prefix_len: u32,
}

impl Subnet {
    pub const CONV: Subnet = Subnet::new(LayerKind::Conv, 0x0000, 4);
    pub const POOL: Subnet = Subnet::new(LayerKind::Pool, 0x1000, 5);
    pub const FULLY_CONNECTED: Subnet = Subnet::new(LayerKind::FullyConnected, 0x1800, 5);
    pub const DISABLED: Subnet = Subnet::new(LayerKind::Disabled, 0x2000, 5);

    pub const ALL: [Subnet; 4] = [
        Self::CONV,
        Self::POOL,
        Self::FULLY_CONNECTED,
        Self::DISABLED,
    ];

    const fn new(kind: LayerKind, base: u16, prefix_len: u32) -> Self {
        Self {
            kind,
            base: InterfaceAddress::from_u16(base),
            prefix_len,
        }
    }

    pub const fn kind(self) -> LayerKind {
        self.kind
    }

    pub const fn base(self) -> InterfaceAddress {
        self.base
    }

    pub const fn prefix_len(self) -> u32 {
        self.prefix_len
    }

    pub const fn payload_bits(self) -> u32 {
        ADDRESS_BITS - self.prefix_len
    }

    /// Number of addresses in the block.
    pub const fn size(self) -> u32 {
        1 << self.payload_bits()
    }

    pub const fn mask(self) -> u16 {
        !((1u32 << self.payload_bits()) - 1) as u16
    }

    pub const fn first(self) -> InterfaceAddress {
        self.base
    }

    pub const fn last(self) -> InterfaceAddress {
        InterfaceAddress::from_u16(self.base.value() + (self.size() - 1) as u16)
    }

    pub const fn contains(self, addr: InterfaceAddress) -> bool {
        addr.value() & self.mask() == self.base.value()
    }

    /// Address carrying `payload` in this subnet's host bits.
    pub fn address(self, payload: u16) -> InterfaceAddress {
        debug_assert!((payload as u32) < self.size());
        InterfaceAddress::from_u16(self.base.value() | payload)
    }
}

impl fmt::Display for Subnet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.base, self.prefix_len)
    }
}

/// The subnet containing `addr`, or `None` for addresses past `39.255`.
pub fn subnet_of(addr: InterfaceAddress) -> Option<Subnet> {
    Subnet::ALL.into_iter().find(|s| s.contains(addr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoolType {
    Max,
    Average,
}

impl fmt::Display for PoolType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolType::Max => "Max",
            PoolType::Average => "Average",
        })
    }
}

/// Decoded configuration of a single layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv {
        filter_size: u8,
        feature_maps: u8,
        stride: u8,
    },
    Pool {
        kernel: u8,
        stride: u8,
        pool_type: PoolType,
        /// Unused 6-bit filler, carried verbatim.
        placeholder: u8,
    },
    FullyConnected {
        neurons: u16,
    },
    Disabled {
        /// Unused 11-bit filler, carried verbatim.
        placeholder: u16,
    },
}

// (name, bit width, stored value); stored values are already offset.
type Field = (&'static str, u32, u16);

fn offset_field(field: &'static str, value: u32, bits: u32) -> Result<Field, CodecError> {
    let max = 1u32 << bits;
    if !(1..=max).contains(&value) {
        return Err(CodecError::Range {
            field,
            value: value as i64,
            min: 1,
            max: max as i64,
        });
    }
    Ok((field, bits, (value - 1) as u16))
}

fn raw_field(field: &'static str, value: u32, bits: u32) -> Result<Field, CodecError> {
    let max = (1u32 << bits) - 1;
    if value > max {
        return Err(CodecError::Range {
            field,
            value: value as i64,
            min: 0,
            max: max as i64,
        });
    }
    Ok((field, bits, value as u16))
}

impl LayerSpec {
    pub const fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv { .. } => LayerKind::Conv,
            LayerSpec::Pool { .. } => LayerKind::Pool,
            LayerSpec::FullyConnected { .. } => LayerKind::FullyConnected,
            LayerSpec::Disabled { .. } => LayerKind::Disabled,
        }
    }

    pub const fn is_disabled(&self) -> bool {
        matches!(self, LayerSpec::Disabled { .. })
    }

    /// Payload fields in encoding order (most significant first).
    fn fields(&self) -> Result<Vec<Field>, CodecError> {
        Ok(match *self {
            LayerSpec::Conv {
                filter_size,
                feature_maps,
                stride,
            } => vec![
                offset_field("filter_size", filter_size.into(), 3)?,
                offset_field("feature_maps", feature_maps.into(), 7)?,
                offset_field("stride", stride.into(), 2)?,
            ],
            LayerSpec::Pool {
                kernel,
                stride,
                pool_type,
                placeholder,
            } => vec![
                offset_field("kernel", kernel.into(), 2)?,
                offset_field("stride", stride.into(), 2)?,
                ("pool_type", 1, pool_type as u16),
                raw_field("placeholder", placeholder.into(), 6)?,
            ],
            LayerSpec::FullyConnected { neurons } => {
                vec![offset_field("neurons", neurons.into(), 11)?]
            }
            LayerSpec::Disabled { placeholder } => {
                vec![raw_field("placeholder", placeholder.into(), 11)?]
            }
        })
    }

    /// Checks every field against its range.
    pub fn validate(&self) -> Result<(), CodecError> {
        self.fields().map(|_| ())
    }

    /// Number of payload bits the layer's fields occupy.
    pub fn payload_width(&self) -> u32 {
        match self.kind() {
            LayerKind::Conv => 12,
            _ => 11,
        }
    }
}

impl fmt::Display for LayerSpec {
    /// One row in the `kind | Configuration` listing style.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv {
                filter_size,
                feature_maps,
                stride,
            } => write!(
                f,
                "conv | Filter size: {filter_size}, Stride size: {stride}, feature maps: {feature_maps}"
            ),
            LayerSpec::Pool {
                kernel,
                stride,
                pool_type,
                ..
            } => write!(
                f,
                "pool | Kernel size: {kernel}, Stride size: {stride}, Type: {pool_type}"
            ),
            LayerSpec::FullyConnected { neurons } => write!(f, "full | Neurons: {neurons}"),
            LayerSpec::Disabled { placeholder } => {
                write!(f, "disabled | Placeholder: {placeholder}")
            }
        }
    }
}

/// Packs a layer into its interface address.
pub fn encode_layer(spec: &LayerSpec) -> Result<InterfaceAddress, CodecError> {
    let fields = spec.fields()?;
    let payload = fields
        .iter()
        .fold(0u16, |acc, &(_, bits, stored)| (acc << bits) | stored);
    Ok(spec.kind().subnet().address(payload))
}

/// Inverse of [`encode_layer`].
pub fn decode_address(addr: InterfaceAddress) -> Result<LayerSpec, CodecError> {
    let subnet = subnet_of(addr).ok_or(CodecError::InvalidSubnet(addr))?;
    let payload = addr.value() & !subnet.mask();
    // take(bits, shift) extracts `bits` bits ending `shift` bits above the LSB.
    let take = |bits: u32, shift: u32| (payload >> shift) & ((1u16 << bits) - 1);
    Ok(match subnet.kind() {
        LayerKind::Conv => LayerSpec::Conv {
            filter_size: (take(3, 9) + 1) as u8,
            feature_maps: (take(7, 2) + 1) as u8,
            stride: (take(2, 0) + 1) as u8,
        },
        LayerKind::Pool => LayerSpec::Pool {
            kernel: (take(2, 9) + 1) as u8,
            stride: (take(2, 7) + 1) as u8,
            pool_type: if take(1, 6) == 0 {
                PoolType::Max
            } else {
                PoolType::Average
            },
            placeholder: take(6, 0) as u8,
        },
        LayerKind::FullyConnected => LayerSpec::FullyConnected {
            neurons: take(11, 0) + 1,
        },
        LayerKind::Disabled => LayerSpec::Disabled {
            placeholder: take(11, 0),
        },
    })
}

/// A decoded CNN: Disabled entries removed, output layer sized to the class count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    layers: Vec<LayerSpec>,
    num_classes: usize,
}

impl Architecture {
    /// Validates the structural rules: at least two layers, Conv first,
    /// nothing but FC after the first FC, and a final FC of `num_classes`
    /// neurons.
    pub fn new(layers: Vec<LayerSpec>, num_classes: usize) -> Result<Self, CodecError> {
        let invalid = |msg: String| Err(CodecError::InvalidParticle(msg));
        if num_classes == 0 {
            return invalid("num_classes must be positive".into());
        }
        if layers.len() < 2 {
            return invalid(format!("{} layer(s); at least 2 required", layers.len()));
        }
        for layer in &layers {
            layer.validate()?;
            if layer.is_disabled() {
                return invalid("Disabled layer in a decoded architecture".into());
            }
        }
        if layers[0].kind() != LayerKind::Conv {
            return invalid(format!(
                "first layer is {}, expected conv",
                layers[0].kind()
            ));
        }
        if let Some(first_fc) = layers
            .iter()
            .position(|l| l.kind() == LayerKind::FullyConnected)
        {
            if let Some(bad) = layers[first_fc..]
                .iter()
                .find(|l| l.kind() != LayerKind::FullyConnected)
            {
                return invalid(format!(
                    "{} layer after a fully-connected layer",
                    bad.kind()
                ));
            }
        }
        match layers.last() {
            Some(&LayerSpec::FullyConnected { neurons }) if neurons as usize == num_classes => {}
            Some(last) => {
                return invalid(format!(
                    "last layer `{last}` must be full with {num_classes} neurons"
                ))
            }
            None => unreachable!(),
        }
        Ok(Self {
            layers,
            num_classes,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Addresses of the layers, in order.
    pub fn encode(&self) -> Vec<InterfaceAddress> {
        self.layers
            .iter()
            .map(|l| encode_layer(l).expect("architecture layers are range-checked"))
            .collect()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{layer}")?;
        }
        Ok(())
    }
}

/// Floors one real coordinate to its byte value.
pub fn coordinate_to_byte(x: f64) -> Result<u8, CodecError> {
    if !(0.0..256.0).contains(&x) {
        return Err(CodecError::InvalidParticle(format!(
            "coordinate {x} outside [0, 256)"
        )));
    }
    Ok(x.floor() as u8)
}

/// Interface addresses of a real-valued position vector, one per byte pair.
pub fn position_addresses(position: &[f64]) -> Result<Vec<InterfaceAddress>, CodecError> {
    if position.len() % 2 != 0 {
        return Err(CodecError::InvalidParticle(format!(
            "position length {} is odd",
            position.len()
        )));
    }
    position
        .chunks_exact(2)
        .map(|pair| {
            Ok(InterfaceAddress::from_bytes(
                coordinate_to_byte(pair[0])?,
                coordinate_to_byte(pair[1])?,
            ))
        })
        .collect()
}

/// Decodes a whole particle position into an [`Architecture`].
///
/// The last interface must decode to a fully-connected layer; its neuron
/// count is replaced by `num_classes`.
pub fn decode_particle_position(
    position: &[f64],
    num_classes: usize,
) -> Result<Architecture, CodecError> {
    let addresses = position_addresses(position)?;
    let mut layers = Vec::with_capacity(addresses.len());
    for (slot, addr) in addresses.iter().enumerate() {
        let spec = decode_address(*addr).map_err(|_| {
            CodecError::InvalidParticle(format!("slot {slot} holds {addr}, outside every subnet"))
        })?;
        layers.push(spec);
    }
    match layers.last_mut() {
        Some(LayerSpec::FullyConnected { neurons }) => {
            *neurons = u16::try_from(num_classes).map_err(|_| CodecError::Range {
                field: "num_classes",
                value: num_classes as i64,
                min: 1,
                max: 2048,
            })?;
        }
        Some(other) => {
            return Err(CodecError::InvalidParticle(format!(
                "last slot decodes to {}, expected full",
                other.kind()
            )))
        }
        None => return Err(CodecError::InvalidParticle("empty position".into())),
    }
    layers.retain(|l| !l.is_disabled());
    Architecture::new(layers, num_classes)
}

/// Every value of every variant within its field ranges, in address order.
pub fn all_layer_specs() -> impl Iterator<Item = LayerSpec> {
    let conv = (1..=8u8).flat_map(|filter_size| {
        (1..=128u8).flat_map(move |feature_maps| {
            (1..=4u8).map(move |stride| LayerSpec::Conv {
                filter_size,
                feature_maps,
                stride,
            })
        })
    });
    let pool = (1..=4u8).flat_map(|kernel| {
        (1..=4u8).flat_map(move |stride| {
            [PoolType::Max, PoolType::Average]
                .into_iter()
                .flat_map(move |pool_type| {
                    (0..64u8).map(move |placeholder| LayerSpec::Pool {
                        kernel,
                        stride,
                        pool_type,
                        placeholder,
                    })
                })
        })
    });
    let fc = (1..=2048u16).map(|neurons| LayerSpec::FullyConnected { neurons });
    let disabled = (0..2048u16).map(|placeholder| LayerSpec::Disabled { placeholder });
    conv.chain(pool).chain(fc).chain(disabled)
}
