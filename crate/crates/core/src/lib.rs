//! Discrete-event models of remote access to a hierarchical storage system:
//! network paths, disks, tape libraries, the pdata/pftp protocol family,
//! FTP dialect negotiation and XRSL stage-in.
#![no_std]
// `!(x > 0.0)` is how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod des;
pub mod dialect;
pub mod fair;
pub mod netmodel;
pub mod protocols;
pub mod storage;
pub mod testbed;
pub mod time;
pub mod xrsl;
