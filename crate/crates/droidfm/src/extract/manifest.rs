//! Manifest analysis: pulls the four manifest-side feature kinds out of a
//! decoded `AndroidManifest.xml`.

use std::collections::BTreeSet;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};
use crate::token::{FeatureCategory, FeatureToken};

/// The manifest-side feature sets: declared components, hardware features,
/// requested permissions, and intent-filter actions/categories.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ManifestFeatures {
    pub components: BTreeSet<FeatureToken>,
    pub hardware: BTreeSet<FeatureToken>,
    pub permissions: BTreeSet<FeatureToken>,
    pub intent_filters: BTreeSet<FeatureToken>,
    /// Relevant elements skipped for a missing or unusable `android:name`.
    pub warnings: usize,
}

fn android_name(element: &BytesStart<'_>, offset: u64) -> Result<Option<String>> {
    for attr in element.attributes() {
        let attr = attr.map_err(|e| Error::ManifestXml {
            offset,
            msg: e.to_string(),
        })?;
        if attr.key.as_ref() == b"android:name" {
            let value = attr.unescape_value().map_err(|e| Error::ManifestXml {
                offset,
                msg: e.to_string(),
            })?;
            return Ok(Some(value.into_owned()));
        }
    }
    Ok(None)
}

/// Parses a decoded manifest. Malformed XML is an error carrying the byte
/// offset; elements of interest that lack `android:name` are skipped and
/// counted in [`ManifestFeatures::warnings`].
pub fn parse_manifest(manifest_text: &str) -> Result<ManifestFeatures> {
    let mut reader = Reader::from_str(manifest_text);
    reader.config_mut().check_end_names = true;
    let mut features = ManifestFeatures::default();
    let mut intent_filter_depth = 0usize;

    loop {
        let offset = reader.buffer_position();
        let event = reader.read_event().map_err(|e| Error::ManifestXml {
            offset: reader.buffer_position(),
            msg: e.to_string(),
        })?;
        match event {
            Event::Eof => break,
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let name = e.name();
                let category = match name.as_ref() {
                    b"activity" | b"service" | b"receiver" | b"provider" => {
                        Some(FeatureCategory::Component)
                    }
                    b"uses-feature" => Some(FeatureCategory::Hardware),
                    b"uses-permission" => Some(FeatureCategory::Permission),
                    b"action" | b"category" if intent_filter_depth > 0 => {
                        Some(FeatureCategory::IntentFilter)
                    }
                    b"intent-filter" => {
                        if !is_empty {
                            intent_filter_depth += 1;
                        }
                        None
                    }
                    _ => None,
                };
                if let Some(category) = category {
                    match android_name(e, offset)? {
                        Some(value) => match FeatureToken::new(category, value) {
                            Ok(token) => {
                                let set = match category {
                                    FeatureCategory::Component => &mut features.components,
                                    FeatureCategory::Hardware => &mut features.hardware,
                                    FeatureCategory::Permission => &mut features.permissions,
                                    FeatureCategory::IntentFilter => &mut features.intent_filters,
                                    _ => unreachable!(),
                                };
                                set.insert(token);
                            }
                            Err(_) => features.warnings += 1,
                        },
                        None => features.warnings += 1,
                    }
                }
            }
            Event::End(ref e) => {
                if e.name().as_ref() == b"intent-filter" {
                    intent_filter_depth = intent_filter_depth.saturating_sub(1);
                }
            }
            _ => {}
        }
    }
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(v: &str) -> FeatureToken {
        FeatureToken::new(FeatureCategory::Permission, v).unwrap()
    }

    #[test]
    fn extracts_a_permission() {
        let xml = r#"<manifest xmlns:android="http://schemas.android.com/apk/res/android">
            <uses-permission android:name="android.permission.SEND_SMS"/>
        </manifest>"#;
        let f = parse_manifest(xml).unwrap();
        assert_eq!(f.permissions, [perm("android.permission.SEND_SMS")].into());
        assert!(f.components.is_empty());
        assert_eq!(f.warnings, 0);
    }

    #[test]
    fn extracts_intent_filter_actions_and_categories() {
        let xml = r#"<manifest>
          <application>
            <receiver android:name="com.x.Boot">
              <intent-filter>
                <action android:name="android.intent.action.BOOT_COMPLETED"/>
                <category android:name="android.intent.category.DEFAULT"/>
              </intent-filter>
            </receiver>
          </application>
        </manifest>"#;
        let f = parse_manifest(xml).unwrap();
        let expect: BTreeSet<_> = [
            FeatureToken::new(
                FeatureCategory::IntentFilter,
                "android.intent.action.BOOT_COMPLETED",
            )
            .unwrap(),
            FeatureToken::new(
                FeatureCategory::IntentFilter,
                "android.intent.category.DEFAULT",
            )
            .unwrap(),
        ]
        .into();
        assert_eq!(f.intent_filters, expect);
        assert_eq!(
            f.components,
            [FeatureToken::new(FeatureCategory::Component, "com.x.Boot").unwrap()].into()
        );
    }

    #[test]
    fn action_outside_intent_filter_is_ignored() {
        let xml = r#"<manifest><action android:name="android.intent.action.MAIN"/></manifest>"#;
        let f = parse_manifest(xml).unwrap();
        assert!(f.intent_filters.is_empty());
        assert_eq!(f.warnings, 0);
    }

    #[test]
    fn empty_application_yields_four_empty_sets() {
        let f = parse_manifest("<manifest><application/></manifest>").unwrap();
        assert!(f.components.is_empty());
        assert!(f.hardware.is_empty());
        assert!(f.permissions.is_empty());
        assert!(f.intent_filters.is_empty());
    }

    #[test]
    fn missing_android_name_is_skipped_with_warning() {
        let xml = r#"<manifest>
            <uses-permission/>
            <uses-feature android:name="android.hardware.camera"/>
        </manifest>"#;
        let f = parse_manifest(xml).unwrap();
        assert_eq!(f.warnings, 1);
        assert_eq!(f.hardware.len(), 1);
    }

    #[test]
    fn malformed_xml_reports_a_byte_offset() {
        let err = parse_manifest("<manifest><application></wrong></manifest>").unwrap_err();
        match err {
            Error::ManifestXml { offset, .. } => assert!(offset > 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn escaped_attribute_values_are_unescaped() {
        let xml = r#"<manifest><service android:name="com.a.B&amp;C"/></manifest>"#;
        let f = parse_manifest(xml).unwrap();
        assert_eq!(
            f.components,
            [FeatureToken::new(FeatureCategory::Component, "com.a.B&C").unwrap()].into()
        );
    }
}
