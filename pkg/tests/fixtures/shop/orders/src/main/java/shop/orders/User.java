package shop.orders;

import javax.persistence.Entity;

/**
 * Local copy of the user record; deliberately slimmer than the one the
 * users service owns.
 */
@Entity
public class User {
    private long id;
    private String name;
    private String email;
}
