package shop.users;

import org.springframework.stereotype.Repository;

@Repository
public class UserRepository {

    public User findById(long id) {
        return null;
    }

    public List<User> findAll() {
        return null;
    }

    public User save(User user) {
        return user;
    }

    public User findOneByEmail(String email) {
        return null;
    }
}
