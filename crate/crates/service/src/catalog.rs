use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nftscope_core::storage::{CollectionView, StorageError, Store};

type Revision = (String, Option<String>);

/// Shared cache of immutable collection views.
///
/// A view is rebuilt when the stored manifest or rarity record changes, so a
/// re-ingest or rarity run becomes visible on the next request. Handlers
/// keep the `Arc` they were given for the whole request.
#[derive(Debug)]
pub struct Catalog {
    store: Store,
    views: RwLock<HashMap<String, (Revision, Arc<CollectionView>)>>,
}

impl Catalog {
    pub fn new(store: Store) -> Self {
        Catalog {
            store,
            views: RwLock::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn ids(&self) -> Result<Vec<String>, StorageError> {
        self.store.list_collections()
    }

    pub fn get(&self, id: &str) -> Result<Arc<CollectionView>, StorageError> {
        let rev = match self.store.revision(id) {
            Ok(r) => r,
            Err(e) => {
                if matches!(e, StorageError::UnknownCollection(_)) {
                    self.views.write().unwrap_or_else(|p| p.into_inner()).remove(id);
                }
                return Err(e);
            }
        };
        if let Some((cached, view)) = self.views.read().unwrap_or_else(|p| p.into_inner()).get(id) {
            if *cached == rev {
                return Ok(Arc::clone(view));
            }
        }
        let view = Arc::new(self.store.view(id)?);
        self.views
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.to_owned(), (rev, Arc::clone(&view)));
        Ok(view)
    }
}
